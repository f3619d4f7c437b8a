#pragma once

// Global coordinate naming. All indices are 1-based.

#include <string>

namespace ksoc::names {

inline std::string idx(int i) { return std::to_string(i); }

inline std::string t(int A) { return "t" + idx(A); }
inline std::string q0(int B) { return "q0_" + idx(B); }
inline std::string q(int i) { return "q" + idx(i); }
inline std::string u(int a) { return "u" + idx(a); }
inline std::string v(int i, int A) { return "v" + idx(i) + "_" + idx(A); }
inline std::string p(int A, int i) { return "p" + idx(A) + "_" + idx(i); }
inline std::string p0(int A, int B) { return "p" + idx(A) + "_0" + idx(B); }
inline std::string lam(int alpha) { return "lam" + idx(alpha); }

// Free components of a k-vector field Z_A on the unified bundle.
inline std::string zd(int A, int a) { return "ZD" + idx(A) + "_" + idx(a); }
inline std::string zf(int A, int i, int B) {
  return "ZF" + idx(A) + "_" + idx(i) + "_" + idx(B);
}
inline std::string zg(int A, int B, int i) {
  return "ZG" + idx(A) + "_" + idx(B) + "_" + idx(i);
}

}  // namespace ksoc::names

#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace homog {

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct SingularMatrix : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AsymmetryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotConverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CallbackDomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FitDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FluxError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GradingError : DomainError {
  using DomainError::DomainError;
};
struct PairingError : DomainError {
  using DomainError::DomainError;
};
struct ResolutionError : DomainError {
  using DomainError::DomainError;
};

struct Vec2 {
  double x = 0.0, y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::sqrt(x * x + y * y); }
};
inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

/// Dense 2x2 matrix, row-major.
struct Mat2 {
  double m[2][2] = {{0.0, 0.0}, {0.0, 0.0}};

  static Mat2 identity() { return {{{1.0, 0.0}, {0.0, 1.0}}}; }
  /// 90-degree rotation J: J e1 = e2, J e2 = -e1.
  static Mat2 rotation_j() { return {{{0.0, -1.0}, {1.0, 0.0}}}; }

  Vec2 apply(const Vec2& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y};
  }
  Mat2 operator+(const Mat2& o) const {
    Mat2 r;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) r.m[i][j] = m[i][j] + o.m[i][j];
    return r;
  }
  Mat2 operator-(const Mat2& o) const {
    Mat2 r;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) r.m[i][j] = m[i][j] - o.m[i][j];
    return r;
  }
  Mat2 operator*(double s) const {
    Mat2 r;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) r.m[i][j] = m[i][j] * s;
    return r;
  }
  Mat2 transpose() const { return {{{m[0][0], m[1][0]}, {m[0][1], m[1][1]}}}; }
  double quadratic(const Vec2& v) const { return apply(v).dot(v); }
};

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

/// Log threshold from HOMOG_LOG in {error, info, debug}; default error.
inline LogLevel log_level() {
  static LogLevel lvl = [] {
    const char* e = std::getenv("HOMOG_LOG");
    if (!e) return LogLevel::Error;
    std::string s(e);
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    return LogLevel::Error;
  }();
  return lvl;
}

template <typename... Args>
inline void log_msg(LogLevel lvl, const char* fmt, Args... args) {
  if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
  std::fprintf(stderr, "[homog] ");
  std::fprintf(stderr, fmt, args...);
  std::fprintf(stderr, "\n");
}

#define HOMOG_INFO(...) ::homog::log_msg(::homog::LogLevel::Info, __VA_ARGS__)
#define HOMOG_DEBUG(...) ::homog::log_msg(::homog::LogLevel::Debug, __VA_ARGS__)

}  // namespace homog

#include "homog/closed_form.hpp"

#include <cmath>

namespace homog::closed_form {

namespace {
constexpr double kPi = 3.14159265358979323846;

// Solve the 3x3 linear system M x = rhs by partial-pivot elimination.
// Throws SingularMatrix with a crude condition estimate if a pivot vanishes.
void solve3(double M[3][3], double rhs[3], double x[3]) {
  int perm[3] = {0, 1, 2};
  double norm_a = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) norm_a = std::max(norm_a, std::abs(M[i][j]));
  double min_pivot = norm_a;
  for (int col = 0; col < 3; ++col) {
    int p = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(M[perm[r]][col]) > std::abs(M[perm[p]][col])) p = r;
    std::swap(perm[col], perm[p]);
    double piv = M[perm[col]][col];
    if (std::abs(piv) < 1e-300 * norm_a || piv == 0.0) {
      throw SingularMatrix("z_profile transmission system singular (cond >= " +
                           std::to_string(norm_a / std::max(std::abs(piv), 1e-300)) + ")");
    }
    min_pivot = std::min(min_pivot, std::abs(piv));
    for (int r = col + 1; r < 3; ++r) {
      double f = M[perm[r]][col] / piv;
      M[perm[r]][col] = 0.0;
      for (int j = col + 1; j < 3; ++j) M[perm[r]][j] -= f * M[perm[col]][j];
      rhs[perm[r]] -= f * rhs[perm[col]];
    }
  }
  for (int row = 2; row >= 0; --row) {
    double s = rhs[perm[row]];
    for (int j = row + 1; j < 3; ++j) s -= M[perm[row]][j] * x[j];
    x[row] = s / M[perm[row]][row];
  }
}
}  // namespace

double scalar_radius(double mu, double eps, double R) {
  if (!(mu > 0.0) || !(eps > 0.0)) throw DomainError("scalar_radius: mu, eps must be positive");
  double r = std::exp(-2.0 * kPi / (mu * eps * eps));
  if (!(r < R)) throw DomainError("scalar_radius: r_eps >= R, scaling outside admissible regime");
  return r;
}

double stokes_radius(double gamma, double eps) {
  if (!(gamma > 0.0) || !(eps > 0.0)) throw DomainError("stokes_radius: gamma, eps must be positive");
  double r = std::exp(-4.0 * kPi / (gamma * eps * eps));
  if (!(r < 1.0)) throw DomainError("stokes_radius: r_eps >= 1");
  return r;
}

WSample w_profile(double r, const AnnulusSpec& annulus) {
  annulus.validate();
  if (r < 0.0) throw DomainError("w_profile: r < 0");
  WSample s;
  if (r <= annulus.r_eps) {
    s.value = 0.0;
    s.grad_magnitude = 0.0;
  } else if (r >= annulus.R) {
    s.value = 1.0;
    s.grad_magnitude = 0.0;
  } else {
    double la = std::log(annulus.R / annulus.r_eps);
    s.value = (std::log(r) - std::log(annulus.r_eps)) / la;
    s.grad_magnitude = 1.0 / (la * r);
  }
  return s;
}

double cell_dirichlet_energy(const AnnulusSpec& annulus) {
  if (!(annulus.r_eps > 0.0) || annulus.R - annulus.r_eps < 1e-12)
    throw DomainError("cell_dirichlet_energy: degenerate annulus");
  return 2.0 * kPi / std::log(annulus.R / annulus.r_eps);
}

ZProfile z_profile_shifted(double eps, const AnnulusSpec& annulus, double shift) {
  annulus.validate();
  if (!(eps > 0.0)) throw DomainError("z_profile: eps must be positive");
  const double R = annulus.R, re = annulus.r_eps;
  const double al = annulus.alpha();
  const double A = eps * eps / (kPi * R * R * (al * al - shift));
  const double beta = -eps * eps / (4.0 * kPi * R * R);

  // Unknowns in the scaled basis a_hat (r/R)^al + b_hat (r/r_eps)^(-al):
  // keeps the system well conditioned however small r_eps is.
  const double q = std::pow(re / R, al);  // = (R/re)^(-al), in (0, 1)
  double M[3][3], rhs[3], x[3];
  // Z'(R) = 0
  M[0][0] = al / R;
  M[0][1] = -(al / R) * q;
  M[0][2] = 0.0;
  rhs[0] = -2.0 * A * R;
  // value continuity at r_eps
  M[1][0] = q;
  M[1][1] = 1.0;
  M[1][2] = -1.0;
  rhs[1] = (beta - A) * re * re;
  // derivative continuity at r_eps
  M[2][0] = (al / re) * q;
  M[2][1] = -al / re;
  M[2][2] = 0.0;
  rhs[2] = 2.0 * (beta - A) * re;
  solve3(M, rhs, x);

  ZProfile z;
  z.a = x[0] * std::pow(R, -al);
  z.b = x[1] * std::pow(re, al);
  z.c = x[2];
  z.alpha = al;
  z.eps = eps;
  z.annulus = annulus;
  z.A = A;
  z.beta = beta;
  return z;
}

ZProfile z_profile(double eps, const AnnulusSpec& annulus) {
  return z_profile_shifted(eps, annulus, 4.0);
}

double ZProfile::value(double r) const {
  if (r <= annulus.r_eps) return beta * r * r + c;
  double rr = std::min(r, annulus.R);
  return a * std::pow(rr, alpha) + b * std::pow(rr, -alpha) + A * rr * rr;
}

double ZProfile::derivative(double r) const {
  if (r <= annulus.r_eps) return 2.0 * beta * r;
  if (r > annulus.R) return 0.0;
  return a * alpha * std::pow(r, alpha - 1.0) - b * alpha * std::pow(r, -alpha - 1.0) +
         2.0 * A * r;
}

double ZProfile::cell_average() const {
  const double R = annulus.R, re = annulus.r_eps;
  // core: 2*pi * int_0^re (beta r^2 + c) r dr
  double core = 2.0 * kPi * (beta * std::pow(re, 4) / 4.0 + c * re * re / 2.0);
  // annulus: 2*pi * int_re^R (a r^al + b r^-al + A r^2) r dr
  auto prim = [&](double r) {
    return a * std::pow(r, alpha + 2.0) / (alpha + 2.0) +
           b * std::pow(r, 2.0 - alpha) / (2.0 - alpha) + A * std::pow(r, 4) / 4.0;
  };
  double ann = 2.0 * kPi * (prim(R) - prim(re));
  double outside = (1.0 - kPi * R * R) * value(R);
  return core + ann + outside;
}

double zbar_limit(double mu) {
  if (!(mu > 0.0)) throw DomainError("zbar_limit: mu must be positive");
  const double e2 = std::exp(2.0);
  return 4.0 * (e2 + 1.0) / (3.0 * (e2 - 1.0)) / mu;
}

double zbar_ode_limit(double mu) {
  if (!(mu > 0.0)) throw DomainError("zbar_ode_limit: mu must be positive");
  const double e2 = std::exp(2.0);
  return (e2 + 1.0) / (e2 - 1.0) / mu;
}

double gamma_scalar(double mu) {
  if (!(mu > 0.0)) throw DomainError("gamma_scalar: mu must be positive");
  const double e2 = std::exp(2.0);
  return 3.0 * (e2 - 1.0) / (4.0 * (e2 + 1.0)) * mu;
}

double gamma_ode_scalar(double mu) {
  if (!(mu > 0.0)) throw DomainError("gamma_ode_scalar: mu must be positive");
  return std::tanh(1.0) * mu;
}

Mat2 brinkman_matrix(double gamma) {
  if (!(gamma > 0.0)) throw DomainError("brinkman_matrix: gamma must be positive");
  double d = 4.0 * (gamma * gamma + 1.0);
  Mat2 g = Mat2::identity() * gamma - Mat2::rotation_j();
  return g * (1.0 / d);
}

Mat2 tartar_matrix(double gamma) {
  if (!(gamma > 0.0)) throw DomainError("tartar_matrix: gamma must be positive");
  return Mat2::identity() * (1.0 / (4.0 * gamma));
}

double stokes_gamma_asymptotic(double r_eps) {
  if (!(r_eps > 0.0) || !(r_eps < 1.0))
    throw DomainError("stokes_gamma_asymptotic: need r_eps in (0,1)");
  return 4.0 * kPi / std::abs(std::log(r_eps));
}

Mat2 smooth_stokes_M(double a) {
  Mat2 m;
  m.m[1][1] = a * a / 2.0;
  return m;
}

Vec2 stokes_corrector_coeffs(const Vec2& u, double gamma) {
  if (!(gamma > 0.0)) throw DomainError("stokes_corrector_coeffs: gamma must be positive");
  double d = gamma * gamma + 1.0;
  return {(-u.x + gamma * u.y) / d, (-u.y - gamma * u.x) / d};
}

EffectiveConstants effective_constants(double mu, double gamma) {
  EffectiveConstants ec;
  ec.mu = mu;
  ec.gamma_scalar = gamma_scalar(mu);
  ec.zbar = zbar_limit(mu);
  ec.Gamma = brinkman_matrix(gamma);
  ec.M = tartar_matrix(gamma);
  return ec;
}

}  // namespace homog::closed_form

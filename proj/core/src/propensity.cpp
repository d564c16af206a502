#include "hetfx/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hetfx/error.hpp"
#include "hetfx/locfit.hpp"
#include "hetfx/normal.hpp"

namespace hetfx {
namespace {

// Beyond this the probit mean is within machine epsilon of 0 or 1.
constexpr double kProbitEtaLimit = 8.125;
constexpr int kMaxHalvings = 40;

double softplus(double t) noexcept { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double log_normal_cdf(double t) noexcept {
  const double c = 0.5 * std::erfc(-t / std::sqrt(2.0));
  return c > 0.0 ? std::log(c) : -0.5 * t * t - std::log(-t) - 0.91893853320467274;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z(x.rows(), x.cols() + 1);
  z.col(0).setOnes();
  z.rightCols(x.cols()) = x;
  return z;
}

}  // namespace

double inverse_link(Link link, double eta) noexcept {
  if (link == Link::Logit) {
    return eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
  }
  return normal_cdf(eta);
}

double bernoulli_loglik(Link link, const Eigen::VectorXd& eta, const Eigen::VectorXd& d) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double t = eta[i];
    if (link == Link::Logit) {
      ll += d[i] * t - softplus(t);
    } else {
      ll += d[i] != 0.0 ? log_normal_cdf(t) : log_normal_cdf(-t);
    }
  }
  return ll;
}

PropensityFit fit_glm(const Eigen::MatrixXd& x, const Eigen::VectorXd& d, Link link) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = x.cols() + 1;
  if (d.size() != n) throw InvalidArgument("fit_glm: treatment length differs from rows");
  if (n <= k) throw InvalidArgument("fit_glm: need more rows than coefficients");
  const double treated = d.sum();
  if (treated == 0.0 || treated == static_cast<double>(n)) {
    throw InvalidArgument("fit_glm: treatment is constant; the model is not identified");
  }
  const Eigen::MatrixXd z = with_intercept(x);
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
    qr.setThreshold(1e-10);
    if (qr.rank() < k) throw SingularDesign("fit_glm: design matrix is rank deficient");
  }

  PropensityFit fit;
  fit.link = link;
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd eta = z * alpha;
  double ll = bernoulli_loglik(link, eta, d);
  fit.loglik_trace.push_back(ll);

  Eigen::VectorXd w(n), work(n);
  for (int iter = 1; iter <= kIrlsMaxIterations; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double mu, dmu;
      if (link == Link::Logit) {
        mu = inverse_link(link, eta[i]);
        dmu = mu * (1.0 - mu);
      } else {
        const double t = std::clamp(eta[i], -kProbitEtaLimit, kProbitEtaLimit);
        mu = normal_cdf(t);
        dmu = std::max(normal_pdf(t), std::numeric_limits<double>::epsilon());
      }
      const double var = std::max(mu * (1.0 - mu), std::numeric_limits<double>::min());
      w[i] = dmu * dmu / var;
      work[i] = eta[i] + (d[i] - mu) / std::max(dmu, std::numeric_limits<double>::min());
    }
    Eigen::VectorXd proposal = wls_solve({z, w, work}).coef;
    Eigen::VectorXd next_eta = z * proposal;
    double next_ll = bernoulli_loglik(link, next_eta, d);
    for (int h = 0; h < kMaxHalvings && !(next_ll >= ll - 1e-12 * std::abs(ll)); ++h) {
      proposal = 0.5 * (alpha + proposal);
      next_eta = z * proposal;
      next_ll = bernoulli_loglik(link, next_eta, d);
    }
    if (!(next_ll >= ll - 1e-12 * std::abs(ll))) {
      // No ascent direction left; the current iterate is the optimum.
      fit.converged = true;
      break;
    }
    const double change = (proposal - alpha).cwiseAbs().maxCoeff();
    const bool improving = next_ll > ll;
    alpha = std::move(proposal);
    eta = std::move(next_eta);
    ll = next_ll;
    fit.loglik_trace.push_back(ll);
    fit.iterations = iter;
    if (change < kIrlsTolerance) {
      fit.converged = true;
      break;
    }
    if (alpha.norm() > kSeparationNorm && improving) {
      fit.separation_warning = true;
      break;
    }
  }
  // A likelihood of numerically 1 is only reachable under complete
  // separation, even if the coefficients stopped short of the norm limit.
  if (ll > -1e-8) fit.separation_warning = true;
  fit.alpha_hat = std::move(alpha);
  return fit;
}

PropensityFit fit_glm(const ObservationalDataset& data, Link link) {
  return fit_glm(data.x(), data.d(), link);
}

Eigen::VectorXd predict_scores(const PropensityFit& fit, const Eigen::MatrixXd& x) {
  if (x.cols() + 1 != fit.alpha_hat.size()) {
    throw InvalidArgument("predict_scores: covariate count does not match the fit");
  }
  const Eigen::VectorXd eta =
      (x * fit.alpha_hat.tail(x.cols())).array() + fit.alpha_hat[0];
  Eigen::VectorXd e(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) e[i] = clamp_score(inverse_link(fit.link, eta[i]));
  return e;
}

ScorePolicy parse_score_policy(std::string_view name) {
  if (name == "logit") return ScorePolicy::FitLogit;
  if (name == "probit") return ScorePolicy::FitProbit;
  if (name == "external") return ScorePolicy::External;
  throw InvalidArgument("unknown score policy '" + std::string(name) + "'");
}

std::string_view to_string(ScorePolicy policy) noexcept {
  switch (policy) {
    case ScorePolicy::FitLogit: return "logit";
    case ScorePolicy::FitProbit: return "probit";
    case ScorePolicy::External: return "external";
  }
  return "unknown";
}

ResolvedScores resolve_scores(const ObservationalDataset& data, ScorePolicy policy) {
  if (policy == ScorePolicy::External) {
    if (!data.external_scores()) {
      throw ConfigError("external scores requested but the dataset has no score column");
    }
    return {data.external_scores()->unaryExpr([](double e) { return clamp_score(e); }),
            std::nullopt};
  }
  const Link link = policy == ScorePolicy::FitLogit ? Link::Logit : Link::Probit;
  auto fit = fit_glm(data, link);
  auto scores = predict_scores(fit, data.x());
  return {std::move(scores), std::move(fit)};
}

}  // namespace hetfx

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "magnav/tolles_lawson.hpp"

namespace magnav {

namespace {

struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 3> a{};  // a[0] == 1
};

// Second-order Butterworth via bilinear transform (Q = 1/sqrt(2)).
Biquad butterworth(double fc, double fs, bool highpass) {
  const double w = std::tan(std::numbers::pi * fc / fs);
  const double q = 1.0 / std::sqrt(2.0);
  const double norm = 1.0 / (1.0 + w / q + w * w);
  Biquad bq;
  if (highpass) {
    bq.b = {norm, -2.0 * norm, norm};
  } else {
    bq.b = {w * w * norm, 2.0 * w * w * norm, w * w * norm};
  }
  bq.a = {1.0, 2.0 * (w * w - 1.0) * norm, (1.0 - w / q + w * w) * norm};
  return bq;
}

std::vector<double> run_biquad(const Biquad& f, const std::vector<double>& x) {
  std::vector<double> y(x.size());
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = f.b[0] * x[i] + f.b[1] * x1 + f.b[2] * x2 - f.a[1] * y1 - f.a[2] * y2;
    x2 = x1;
    x1 = x[i];
    y2 = y1;
    y1 = y[i];
  }
  return y;
}

// Forward-backward pass with reflected-edge padding to suppress transients.
std::vector<double> filtfilt(const Biquad& f, const std::vector<double>& x) {
  const std::size_t pad = std::min<std::size_t>(x.size() - 1, 3 * 20);
  std::vector<double> ext;
  ext.reserve(x.size() + 2 * pad);
  for (std::size_t i = pad; i > 0; --i) ext.push_back(2.0 * x.front() - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i)
    ext.push_back(2.0 * x.back() - x[x.size() - 1 - i]);

  std::vector<double> y = run_biquad(f, ext);
  std::reverse(y.begin(), y.end());
  y = run_biquad(f, y);
  std::reverse(y.begin(), y.end());
  return {y.begin() + pad, y.begin() + pad + x.size()};
}

}  // namespace

std::vector<double> bandpass_zero_phase(const std::vector<double>& x, double f_low,
                                        double f_high, double sample_rate) {
  if (!(f_low > 0.0) || !(f_high > f_low) || !(f_high < 0.5 * sample_rate))
    throw std::invalid_argument("bandpass: need 0 < f_low < f_high < fs/2");
  if (x.size() < 4) throw std::invalid_argument("bandpass: series too short");
  const Biquad hp = butterworth(f_low, sample_rate, true);
  const Biquad lp = butterworth(f_high, sample_rate, false);
  return filtfilt(lp, filtfilt(hp, x));
}

}  // namespace magnav

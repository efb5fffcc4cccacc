#include "advex/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <ostream>

namespace advex {

namespace {

constexpr std::array<const char*, kShapeClasses> kClassNames = {"disk",  "square", "triangle",
                                                               "cross", "ring",   "bar"};
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kSuper = 4;
constexpr double kInputScale = 1.0 / 32.0;

bool inside_rotated(ShapeClass shape, double x, double y) {
  const double ax = std::abs(x);
  const double ay = std::abs(y);
  switch (shape) {
    case ShapeClass::Square:
      return ax <= 0.8 && ay <= 0.8;
    case ShapeClass::Triangle: {
      // Equilateral, circumradius 1, apex along -y (up in image rows).
      constexpr double c = 0.8660254037844386;  // cos 30
      return y <= 0.5 && (c * x - 0.5 * y) <= 0.5 && (-c * x - 0.5 * y) <= 0.5;
    }
    case ShapeClass::Cross:
      return (ax <= 0.9 && ay <= 0.3) || (ax <= 0.3 && ay <= 0.9);
    case ShapeClass::Bar:
      return ax <= 1.0 && ay <= 0.3;
    default:
      return false;
  }
}

bool radial(ShapeClass shape) { return shape == ShapeClass::Disk || shape == ShapeClass::Ring; }

bool inside_radial(ShapeClass shape, double r2) {
  if (shape == ShapeClass::Disk) return r2 <= 1.0;
  return r2 <= 1.0 && r2 >= 0.55 * 0.55;
}

}  // namespace

std::string to_string(ShapeClass c) { return kClassNames.at(static_cast<size_t>(c)); }

ShapeClass parse_shape_class(const std::string& text) {
  for (size_t i = 0; i < kClassNames.size(); ++i) {
    if (text == kClassNames[i]) return static_cast<ShapeClass>(i);
  }
  throw InvalidConfig("unknown shape class '" + text + "'");
}

void ShapeInstance::validate() const {
  if (!(base_size > 0.0 && base_size <= 0.5)) {
    throw InvalidConfig("shape instance '" + instance_id + "': base_size must be in (0, 0.5]");
  }
}

std::vector<ShapeInstance> canonical_instances() {
  std::vector<ShapeInstance> out;
  for (int c = 0; c < kShapeClasses; ++c) {
    const auto shape = static_cast<ShapeClass>(c);
    out.push_back({shape, 0.25, to_string(shape)});
  }
  return out;
}

std::vector<ShapeInstance> training_instances(int per_class, std::uint64_t seed) {
  if (per_class < 1) throw InvalidConfig("training_instances: per_class must be >= 1");
  std::vector<ShapeInstance> out;
  for (int c = 0; c < kShapeClasses; ++c) {
    const auto shape = static_cast<ShapeClass>(c);
    Rng rng = Rng::stream(seed, 300 + static_cast<std::uint64_t>(c));
    for (int k = 0; k < per_class; ++k) {
      out.push_back({shape, rng.uniform(0.18, 0.32), to_string(shape) + "-" + std::to_string(k)});
    }
  }
  return out;
}

ScenarioSpace render_space() {
  return ScenarioSpace({{"rotation", 0.0, kTwoPi, 100},
                        {"scale", 0.5, 1.5, 100},
                        {"translate_x", -0.25, 0.25, 100},
                        {"translate_y", -0.25, 0.25, 100},
                        {"foreground_brightness", 0.2, 1.0, 100},
                        {"background_level", 0.0, 0.5, 100}});
}

Image render(const ShapeInstance& z, const Scenario& s) {
  namespace rf = render_factor;
  if (s.size() != 6) throw ContractViolation("render: scenario must have 6 factors");
  const double theta = std::fmod(s[rf::rotation], kTwoPi);
  const double radius = z.base_size * s[rf::scale];
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double inv_r = 1.0 / radius;
  const double fg = s[rf::brightness];
  const double bg = s[rf::background];
  const bool is_radial = radial(z.shape);

  Image image;
  for (int row = 0; row < kImageSide; ++row) {
    for (int col = 0; col < kImageSide; ++col) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        const double py = ((row + (sy + 0.5) / kSuper) / kImageSide - 0.5 - s[rf::translate_y]) * inv_r;
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = ((col + (sx + 0.5) / kSuper) / kImageSide - 0.5 - s[rf::translate_x]) * inv_r;
          bool in;
          if (is_radial) {
            in = inside_radial(z.shape, px * px + py * py);
          } else {
            const double lx = cos_t * px + sin_t * py;
            const double ly = -sin_t * px + cos_t * py;
            in = inside_rotated(z.shape, lx, ly);
          }
          hits += in ? 1 : 0;
        }
      }
      const double coverage = static_cast<double>(hits) / (kSuper * kSuper);
      image(row, col) = bg + coverage * (fg - bg);
    }
  }
  return image;
}

void write_pgm(std::ostream& out, const Image& image) {
  out << "P2\n" << kImageSide << ' ' << kImageSide << "\n255\n";
  for (int row = 0; row < kImageSide; ++row) {
    for (int col = 0; col < kImageSide; ++col) {
      const int level = static_cast<int>(std::lround(std::clamp(image(row, col), 0.0, 1.0) * 255.0));
      out << level << (col + 1 == kImageSide ? '\n' : ' ');
    }
  }
}

// ---------------------------------------------------------------------------

std::string to_string(InputEncoding e) { return e == InputEncoding::Pixels ? "pixels" : "spectrum"; }

InputEncoding parse_input_encoding(const std::string& text) {
  if (text == "pixels") return InputEncoding::Pixels;
  if (text == "spectrum") return InputEncoding::Spectrum;
  throw InvalidConfig("input encoding must be pixels or spectrum; got '" + text + "'");
}

namespace {

const Eigen::MatrixXcd& dft_matrix() {
  static const Eigen::MatrixXcd dft = [] {
    Eigen::MatrixXcd d(kImageSide, kImageSide);
    for (int a = 0; a < kImageSide; ++a) {
      for (int b = 0; b < kImageSide; ++b) d(a, b) = std::polar(1.0, -kTwoPi * a * b / kImageSide);
    }
    return d;
  }();
  return dft;
}

// |2D DFT| of the mean-free image drops translation; resampling it on a
// radius x angle grid and taking |DFT| along angle drops rotation. Feature
// magnitudes scale with contrast.
Vector spectrum_encoding(const Image& image) {
  using Complex = std::complex<double>;
  const Eigen::MatrixXcd& dft = dft_matrix();
  const Eigen::MatrixXd centered = image.array() - image.mean();
  const Eigen::MatrixXd mag = (dft * centered.cast<Complex>() * dft).cwiseAbs() / kImageSide;
  auto at = [&mag](int u, int v) {
    return mag((u + kImageSide) % kImageSide, (v + kImageSide) % kImageSide);
  };
  Eigen::MatrixXcd polar(kImageSide, kImageSide);
  for (int ri = 0; ri < kImageSide; ++ri) {
    const double radius = 0.5 * (ri + 1) * 15.0 / 16.0;
    for (int ai = 0; ai < kImageSide; ++ai) {
      const double angle = kTwoPi * ai / kImageSide;
      const double u = radius * std::cos(angle);
      const double v = radius * std::sin(angle);
      const int u0 = static_cast<int>(std::floor(u));
      const int v0 = static_cast<int>(std::floor(v));
      const double fu = u - u0;
      const double fv = v - v0;
      polar(ri, ai) = (1 - fu) * (1 - fv) * at(u0, v0) + fu * (1 - fv) * at(u0 + 1, v0) +
                      (1 - fu) * fv * at(u0, v0 + 1) + fu * fv * at(u0 + 1, v0 + 1);
    }
  }
  const Eigen::MatrixXd invariant = (polar * dft).cwiseAbs() / kImageSide;
  return Eigen::Map<const Vector>(invariant.data(), kPixels);
}

}  // namespace

Classifier::Classifier(int hidden, InputEncoding encoding) : hidden_(hidden), encoding_(encoding) {
  if (hidden < 0) throw InvalidConfig("classifier: hidden width must be >= 0");
  const Eigen::Index first = hidden_ > 0 ? static_cast<Eigen::Index>(hidden_) * kPixels + hidden_ : 0;
  flat_ = Vector::Zero(first + kShapeClasses * inputs() + kShapeClasses);
  shift_ = Vector::Zero(kPixels);
  scale_ = Vector::Constant(kPixels, kInputScale);
}

Vector Classifier::encode(const Image& image, InputEncoding encoding) {
  if (encoding == InputEncoding::Spectrum) return spectrum_encoding(image);
  return Eigen::Map<const Vector>(image.data(), kPixels);
}

Vector Classifier::features(const Image& image) const {
  return ((encode(image, encoding_) - shift_).array() * scale_.array()).matrix();
}

void Classifier::set_input_normalization(Vector shift, Vector scale) {
  if (shift.size() != kPixels || scale.size() != kPixels || !shift.allFinite() || !scale.allFinite()) {
    throw std::invalid_argument("classifier: normalization must have one finite entry per pixel");
  }
  shift_ = std::move(shift);
  scale_ = std::move(scale);
}

Vector Classifier::logits(const Eigen::Ref<const Vector>& x) const {
  if (hidden_ == 0) return w2() * x + b2();
  const Vector a = (w1() * x + b1()).array().tanh();
  return w2() * a + b2();
}

Vector Classifier::classify(const Image& image) const { return softmax(logits(features(image))); }

int Classifier::predict(const Image& image) const {
  Eigen::Index arg;
  logits(features(image)).maxCoeff(&arg);
  return static_cast<int>(arg);
}

double Classifier::loss_and_gradient(const Eigen::Ref<const Matrix>& X, std::span<const int> labels,
                                     Vector* gradient) const {
  const Eigen::Index n = X.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n || X.rows() != kPixels || n == 0) {
    throw std::invalid_argument("classifier: feature/label shape mismatch");
  }
  Matrix A;
  if (hidden_ > 0) A = ((w1() * X).colwise() + b1()).array().tanh();
  Matrix Z = hidden_ > 0 ? Matrix((w2() * A).colwise() + b2()) : Matrix((w2() * X).colwise() + b2());

  double loss = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Vector logp = log_softmax(Z.col(j));
    loss -= logp[labels[static_cast<size_t>(j)]];
    Z.col(j) = logp.array().exp();  // reuse as probabilities
    Z(labels[static_cast<size_t>(j)], j) -= 1.0;
  }
  loss /= static_cast<double>(n);
  if (!gradient) return loss;

  const Matrix dZ = Z / static_cast<double>(n);
  gradient->setZero(flat_.size());
  const Eigen::Index off = out_offset();
  Eigen::Map<Matrix> dW2(gradient->data() + off, kShapeClasses, inputs());
  if (hidden_ > 0) {
    dW2.noalias() = dZ * A.transpose();
  } else {
    dW2.noalias() = dZ * X.transpose();
  }
  Eigen::Map<Vector>(gradient->data() + off + kShapeClasses * inputs(), kShapeClasses) =
      dZ.rowwise().sum();
  if (hidden_ > 0) {
    const Matrix dU = ((w2().transpose() * dZ).array() * (1.0 - A.array().square())).matrix();
    Eigen::Map<Matrix>(gradient->data(), hidden_, kPixels) = dU * X.transpose();
    Eigen::Map<Vector>(gradient->data() + static_cast<Eigen::Index>(hidden_) * kPixels, hidden_) =
        dU.rowwise().sum();
  }
  return loss;
}

nlohmann::json Classifier::to_json() const {
  return {{"hidden", hidden_},
          {"input", to_string(encoding_)},
          {"classes", std::vector<std::string>(kClassNames.begin(), kClassNames.end())},
          {"input_shift", std::vector<double>(shift_.begin(), shift_.end())},
          {"input_scale", std::vector<double>(scale_.begin(), scale_.end())},
          {"weights", std::vector<double>(flat_.begin(), flat_.end())}};
}

Classifier Classifier::from_json(const nlohmann::json& j) {
  try {
    Classifier c(j.at("hidden").get<int>(),
                 parse_input_encoding(j.value("input", std::string("spectrum"))));
    const auto w = j.at("weights").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != c.flat_.size()) {
      throw InvalidConfig("classifier checkpoint: expected " + std::to_string(c.flat_.size()) +
                          " weights, found " + std::to_string(w.size()));
    }
    c.flat_ = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
    if (j.contains("input_shift")) {
      const auto shift = j.at("input_shift").get<std::vector<double>>();
      const auto scale = j.at("input_scale").get<std::vector<double>>();
      c.set_input_normalization(Eigen::Map<const Vector>(shift.data(), static_cast<Eigen::Index>(shift.size())),
                                Eigen::Map<const Vector>(scale.data(), static_cast<Eigen::Index>(scale.size())));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("classifier checkpoint: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const TrainingOptions& o) {
  j = {{"m", o.m},           {"epochs", o.epochs},         {"learning_rate", o.learning_rate},
       {"hidden", o.hidden}, {"init_scale", o.init_scale}, {"standardize", o.standardize},
       {"input", to_string(o.input)}, {"seed", o.seed}};
}

void from_json(const nlohmann::json& j, TrainingOptions& o) {
  try {
    o.m = j.value("m", o.m);
    o.epochs = j.value("epochs", o.epochs);
    o.learning_rate = j.value("learning_rate", o.learning_rate);
    o.hidden = j.value("hidden", o.hidden);
    o.init_scale = j.value("init_scale", o.init_scale);
    o.standardize = j.value("standardize", o.standardize);
    o.input = parse_input_encoding(j.value("input", to_string(o.input)));
    o.seed = j.value("seed", o.seed);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("training options: ") + e.what());
  }
}

namespace {

void require_within_render_space(const ScenarioSpace& space) {
  const ScenarioSpace full = render_space();
  if (space.size() != full.size()) throw InvalidConfig("training space must have the 6 render factors");
  for (Eigen::Index i = 0; i < full.size(); ++i) {
    const Factor& f = space.factor(i);
    const Factor& g = full.factor(i);
    if (f.name != g.name || f.lower < g.lower || f.upper > g.upper) {
      throw InvalidConfig("training factor '" + f.name + "' must lie within the render space");
    }
  }
}

}  // namespace

TrainingResult train_classifier(std::span<const ShapeInstance> instances,
                                const ScenarioSpace& training_space,
                                const TrainingOptions& options) {
  if (instances.empty()) throw InvalidConfig("train_classifier: no instances");
  if (options.m < 1) throw InvalidConfig("train_classifier: m must be >= 1");
  if (options.epochs < 0) throw InvalidConfig("train_classifier: epochs must be >= 0");
  if (!(options.learning_rate > 0.0)) throw InvalidConfig("train_classifier: learning_rate must be > 0");
  require_within_render_space(training_space);

  const Eigen::Index n = static_cast<Eigen::Index>(instances.size()) * options.m;
  Matrix X(kPixels, n);
  std::vector<int> labels;
  labels.reserve(static_cast<size_t>(n));
  Eigen::Index col = 0;
  for (size_t i = 0; i < instances.size(); ++i) {
    instances[i].validate();
    Rng rng = Rng::stream(options.seed, 1000 + i);
    for (int k = 0; k < options.m; ++k) {
      X.col(col++) = Classifier::encode(render(instances[i], training_space.sample_uniform(rng)), options.input);
      labels.push_back(instances[i].label());
    }
  }

  TrainingResult result{Classifier(options.hidden, options.input), 0.0, {}};
  Classifier& clf = result.classifier;
  if (options.standardize) {
    const Vector mean = X.rowwise().mean();
    const Vector sd = ((X.colwise() - mean).array().square().rowwise().mean()).sqrt().matrix();
    // Constant inputs get unit scale; the 1/32 keeps the input vector norm O(1).
    const Vector scale = sd.unaryExpr([](double v) { return v > 1e-6 ? 1.0 / (32.0 * v) : 1.0; });
    clf.set_input_normalization(mean, scale);
  }
  X = (X.colwise() - clf.input_shift()).array().colwise() * clf.input_scale().array();
  if (options.hidden > 0) {
    Rng init = Rng::stream(options.seed, 7);
    const Eigen::Index first = static_cast<Eigen::Index>(options.hidden) * kPixels;
    for (Eigen::Index i = 0; i < first; ++i) {
      clf.flat()[i] = init.uniform(-options.init_scale, options.init_scale);
    }
    const Eigen::Index out = first + options.hidden;
    for (Eigen::Index i = out; i < out + kShapeClasses * options.hidden; ++i) {
      clf.flat()[i] = init.uniform(-options.init_scale, options.init_scale);
    }
  }

  Vector grad;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    result.loss_curve.push_back(clf.loss_and_gradient(X, labels, &grad));
    clf.flat() -= options.learning_rate * grad;
  }
  result.loss_curve.push_back(clf.loss_and_gradient(X, labels, nullptr));

  int correct = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index arg;
    clf.logits(X.col(j)).maxCoeff(&arg);
    correct += arg == labels[static_cast<size_t>(j)] ? 1 : 0;
  }
  result.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return result;
}

double heldout_accuracy(const Classifier& classifier, std::span<const ShapeInstance> instances,
                        const ScenarioSpace& space, int count, std::uint64_t seed) {
  if (instances.empty() || count < 1) throw InvalidConfig("heldout_accuracy: nothing to evaluate");
  int correct = 0;
  for (size_t i = 0; i < instances.size(); ++i) {
    Rng rng = Rng::stream(seed, 5000 + i);
    for (int k = 0; k < count; ++k) {
      correct += classifier.predict(render(instances[i], space.sample_uniform(rng))) ==
                         instances[i].label() ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(instances.size() * static_cast<size_t>(count));
}

double loss_of(const Classifier& classifier, const ShapeInstance& z, const Scenario& s) {
  const Vector p = classifier.classify(render(z, s));
  return std::clamp(1.0 - p[z.label()], 0.0, 1.0);
}

TargetQuery::Assessment ShapeTarget::assess(const Scenario& s) const {
  const Vector logits = classifier_->logits(classifier_->features(render(instance_, s)));
  Eigen::Index arg;
  logits.maxCoeff(&arg);
  const Vector p = softmax(logits);
  return {std::clamp(1.0 - p[instance_.label()], 0.0, 1.0), arg == instance_.label()};
}

bool ShapeTarget::correct(const Scenario& s) const {
  return classifier_->predict(render(instance_, s)) == instance_.label();
}

ScenarioSpace restrict_training_space(const ScenarioSpace& space, const std::string& factor,
                                      double new_lower, double new_upper) {
  const Eigen::Index idx = space.index_of(factor);
  std::vector<Factor> factors = space.factors();
  Factor& f = factors[static_cast<size_t>(idx)];
  if (!(new_lower >= f.lower && new_upper <= f.upper && new_lower < new_upper)) {
    throw InvalidConfig("restriction [" + std::to_string(new_lower) + ", " + std::to_string(new_upper) +
                        "] is not inside [" + std::to_string(f.lower) + ", " + std::to_string(f.upper) +
                        "] for factor '" + factor + "'");
  }
  f.lower = new_lower;
  f.upper = new_upper;
  return ScenarioSpace(std::move(factors));
}

}  // namespace advex

#pragma once

#include "advex/examiner.hpp"

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace advex {

enum class ShapeClass { Disk, Square, Triangle, Cross, Ring, Bar };

inline constexpr int kShapeClasses = 6;
inline constexpr int kImageSide = 32;
inline constexpr int kPixels = kImageSide * kImageSide;

std::string to_string(ShapeClass c);
ShapeClass parse_shape_class(const std::string& text);

/// Underlying form of a test object: a shape class and its base radius as a
/// fraction of the image width.
struct ShapeInstance {
  ShapeClass shape = ShapeClass::Disk;
  double base_size = 0.25;  // (0, 0.5]
  std::string instance_id;

  int label() const { return static_cast<int>(shape); }
  void validate() const;
};

/// One instance per class, in class order, base size 0.25.
std::vector<ShapeInstance> canonical_instances();

/// `per_class` instances of every class with base sizes drawn from
/// U[0.18, 0.32]; the training population.
std::vector<ShapeInstance> training_instances(int per_class, std::uint64_t seed);

/// Factor indices of the render space, in canonical order.
namespace render_factor {
inline constexpr int rotation = 0;
inline constexpr int scale = 1;
inline constexpr int translate_x = 2;
inline constexpr int translate_y = 3;
inline constexpr int brightness = 4;
inline constexpr int background = 5;
}  // namespace render_factor

/// rotation [0, 2pi] rad, scale [0.5, 1.5], translate_x/y [-0.25, 0.25]
/// image widths, foreground_brightness [0.2, 1], background_level [0, 0.5].
ScenarioSpace render_space();

using Image = Eigen::Matrix<double, kImageSide, kImageSide, Eigen::RowMajor>;

/// Rasterizes the shape rotated about the image center by theta, scaled by
/// base_size * scale, shifted by the translation, with 4x4 supersampling.
/// Pixels blend background and foreground by covered fraction.
Image render(const ShapeInstance& z, const Scenario& s);

/// Plain PGM (P2), maxval 255.
void write_pgm(std::ostream& out, const Image& image);

/// How an image becomes the 1024 classifier inputs. `Pixels` is the raw
/// row-major image. `Spectrum` is a translation- and rotation-invariant
/// Fourier magnitude map (32 radii x 32 angular frequencies) whose entries
/// scale with foreground/background contrast.
enum class InputEncoding { Pixels, Spectrum };

std::string to_string(InputEncoding e);
InputEncoding parse_input_encoding(const std::string& text);

/// Softmax classifier over 1024 encoded inputs, optionally with one tanh
/// hidden layer. Inputs are standardized per position, (x - shift) * scale,
/// with statistics fixed at training time; the untrained default is
/// shift 0, scale 1/32.
class Classifier {
 public:
  Classifier() : Classifier(0) {}
  /// All-zero weights; `hidden` = 0 is plain multinomial logistic regression.
  explicit Classifier(int hidden, InputEncoding encoding = InputEncoding::Spectrum);

  int hidden() const { return hidden_; }
  InputEncoding encoding() const { return encoding_; }
  Eigen::Index parameter_count() const { return flat_.size(); }
  Vector& flat() { return flat_; }
  const Vector& flat() const { return flat_; }

  /// Standardized input vector for an image.
  Vector features(const Image& image) const;
  static Vector encode(const Image& image, InputEncoding encoding);
  const Vector& input_shift() const { return shift_; }
  const Vector& input_scale() const { return scale_; }
  void set_input_normalization(Vector shift, Vector scale);
  Vector logits(const Eigen::Ref<const Vector>& features) const;
  Vector classify(const Image& image) const;
  int predict(const Image& image) const;

  /// Mean cross-entropy over feature columns and its gradient.
  double loss_and_gradient(const Eigen::Ref<const Matrix>& features, std::span<const int> labels,
                           Vector* gradient) const;

  nlohmann::json to_json() const;
  static Classifier from_json(const nlohmann::json& j);

 private:
  int inputs() const { return hidden_ > 0 ? hidden_ : kPixels; }
  Eigen::Map<const Matrix> w1() const { return {flat_.data(), hidden_, kPixels}; }
  Eigen::Map<const Vector> b1() const { return {flat_.data() + hidden_ * kPixels, hidden_}; }
  Eigen::Index out_offset() const { return hidden_ > 0 ? hidden_ * kPixels + hidden_ : 0; }
  Eigen::Map<const Matrix> w2() const { return {flat_.data() + out_offset(), kShapeClasses, inputs()}; }
  Eigen::Map<const Vector> b2() const {
    return {flat_.data() + out_offset() + kShapeClasses * inputs(), kShapeClasses};
  }

  int hidden_ = 0;
  InputEncoding encoding_ = InputEncoding::Spectrum;
  Vector flat_;
  Vector shift_;
  Vector scale_;
};

struct TrainingOptions {
  int m = 10;  // images per instance
  int epochs = 500;
  double learning_rate = 16.0;
  int hidden = 0;
  InputEncoding input = InputEncoding::Spectrum;
  bool standardize = true;  // per-input statistics from the training images
  double init_scale = 0.05;  // hidden-layer init, U[-s, s]
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const TrainingOptions& o);
void from_json(const nlohmann::json& j, TrainingOptions& o);

struct TrainingResult {
  Classifier classifier;
  double train_accuracy = 0.0;
  std::vector<double> loss_curve;  // mean cross-entropy before each epoch, plus final
};

/// Renders m uniform scenarios from `training_space` per instance and fits
/// the classifier by full-batch gradient descent on cross-entropy.
TrainingResult train_classifier(std::span<const ShapeInstance> instances,
                                const ScenarioSpace& training_space,
                                const TrainingOptions& options);

/// Accuracy on `count` uniform scenarios per instance.
double heldout_accuracy(const Classifier& classifier, std::span<const ShapeInstance> instances,
                        const ScenarioSpace& space, int count, std::uint64_t seed);

/// 1 - p_true: an affine remap of the negative true-class probability to [0, 1].
double loss_of(const Classifier& classifier, const ShapeInstance& z, const Scenario& s);

/// Narrows one factor of a training space. Throws InvalidConfig unless
/// [new_lower, new_upper] lies inside the current range.
ScenarioSpace restrict_training_space(const ScenarioSpace& space, const std::string& factor,
                                      double new_lower, double new_upper);

/// Classifier + instance seen through the examiner interface.
class ShapeTarget final : public TargetQuery {
 public:
  ShapeTarget(const Classifier& classifier, ShapeInstance instance)
      : classifier_(&classifier), instance_(std::move(instance)), space_(render_space()) {}

  const ScenarioSpace& space() const override { return space_; }
  double evaluate(const Scenario& s) const override { return loss_of(*classifier_, instance_, s); }
  Assessment assess(const Scenario& s) const override;
  bool correct(const Scenario& s) const;
  const ShapeInstance& instance() const { return instance_; }

 private:
  const Classifier* classifier_;
  ShapeInstance instance_;
  ScenarioSpace space_;
};

}  // namespace advex

#include "gradshield/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gradshield/binio.hpp"

namespace gradshield::nn {

using binio::append_f64;
using binio::append_i64;
using binio::read_f64;
using binio::read_i64;

LabelRuleKind label_rule_from_name(const std::string& s) {
  if (s == "zero") return LabelRuleKind::constant_zero;
  if (s == "uniform") return LabelRuleKind::uniform_class;
  if (s == "teacher") return LabelRuleKind::teacher_class;
  if (s == "teacher-regression") return LabelRuleKind::teacher_regression;
  throw ConfigError("unknown label rule '" + s +
                    "' (expected zero, uniform, teacher, teacher-regression)");
}

std::string label_rule_name(LabelRuleKind k) {
  switch (k) {
    case LabelRuleKind::constant_zero: return "zero";
    case LabelRuleKind::uniform_class: return "uniform";
    case LabelRuleKind::teacher_class: return "teacher";
    case LabelRuleKind::teacher_regression: return "teacher-regression";
  }
  throw ConfigError("unknown label rule enum value");
}

std::vector<double> teacher_matrix(int input_dim, int num_outputs,
                                   std::uint64_t teacher_seed) {
  if (input_dim < 1 || num_outputs < 1) {
    throw ConfigError("teacher map needs positive dimensions");
  }
  GaussianSampler g(derive_seed(teacher_seed, 0x7ea0));
  std::vector<double> v(static_cast<std::size_t>(num_outputs) * input_dim);
  g.fill(v, 1.0 / std::sqrt(static_cast<double>(input_dim)));
  return v;
}

namespace {

void validate_rule(const LabelRule& rule, int num_outputs) {
  if (rule.flip_prob < 0.0 || rule.flip_prob > 1.0) {
    throw ConfigError("flip_prob must lie in [0,1]");
  }
  if (rule.noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
  const bool class_rule = rule.kind == LabelRuleKind::uniform_class ||
                          rule.kind == LabelRuleKind::teacher_class;
  if (class_rule && num_outputs < 1) {
    throw ConfigError("class label rule needs num_outputs >= 1");
  }
  if (rule.kind == LabelRuleKind::teacher_regression && num_outputs != 1) {
    throw ConfigError("teacher-regression label rule needs num_outputs == 1");
  }
}

// Shared per-sample streams: labels draw from label_rng, regression noise
// from label_noise, so generated and relabeled datasets agree.
struct LabelDraw {
  Rng label_rng;
  GaussianSampler label_noise;
  std::uniform_int_distribution<int> uclass;
  std::uniform_real_distribution<double> ureal{0.0, 1.0};

  LabelDraw(std::uint64_t seed, int num_outputs)
      : label_rng(derive_seed(seed, 1)),
        label_noise(derive_seed(seed, 2)),
        uclass(0, std::max(1, num_outputs) - 1) {}
};

Target rule_target(const LabelRule& rule, std::span<const double> x,
                   int num_outputs, std::span<const double> teacher,
                   LabelDraw& draw) {
  const int input_dim = static_cast<int>(x.size());
  switch (rule.kind) {
    case LabelRuleKind::constant_zero:
      return num_outputs == 1 ? Target::of_value(0.0) : Target::of_class(0);
    case LabelRuleKind::uniform_class:
      return Target::of_class(draw.uclass(draw.label_rng));
    case LabelRuleKind::teacher_class: {
      int best = 0;
      double best_v = 0.0;
      for (int c = 0; c < num_outputs; ++c) {
        double acc = 0.0;
        const double* row = teacher.data() + static_cast<std::ptrdiff_t>(c) * input_dim;
        for (int i = 0; i < input_dim; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
        if (c == 0 || acc > best_v) {
          best = c;
          best_v = acc;
        }
      }
      if (rule.flip_prob > 0.0 && draw.ureal(draw.label_rng) < rule.flip_prob) {
        best = draw.uclass(draw.label_rng);
      }
      return Target::of_class(best);
    }
    case LabelRuleKind::teacher_regression: {
      double acc = 0.0;
      for (int i = 0; i < input_dim; ++i) {
        acc += teacher[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
      }
      if (rule.noise_std > 0.0) acc += draw.label_noise.next(rule.noise_std);
      return Target::of_value(acc);
    }
  }
  throw ConfigError("unknown label rule enum value");
}

std::vector<double> rule_teacher(const LabelRule& rule, int input_dim,
                                 int num_outputs) {
  if (rule.kind == LabelRuleKind::teacher_class ||
      rule.kind == LabelRuleKind::teacher_regression) {
    return teacher_matrix(input_dim, num_outputs, rule.teacher_seed);
  }
  return {};
}

}  // namespace

std::vector<DataSample> generate_synthetic_dataset(int input_dim, int count,
                                                   const SyntheticPrior& prior,
                                                   const LabelRule& rule,
                                                   int num_outputs,
                                                   std::uint64_t seed) {
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (count < 0) throw ConfigError("sample count must be >= 0");
  if (!(prior.tau > 0.0)) {
    throw ConfigError("synthetic prior tau must be positive");
  }
  validate_rule(rule, num_outputs);

  const std::vector<double> teacher = rule_teacher(rule, input_dim, num_outputs);
  GaussianSampler xs(derive_seed(seed, 0));
  LabelDraw draw(seed, num_outputs);

  std::vector<DataSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    DataSample d;
    d.x = xs.vector(static_cast<std::size_t>(input_dim), prior.tau);
    d.target = rule_target(rule, d.x, num_outputs, teacher, draw);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<DataSample> label_rows(std::vector<std::vector<double>> rows,
                                   const LabelRule& rule, int num_outputs,
                                   std::uint64_t seed) {
  validate_rule(rule, num_outputs);
  std::vector<DataSample> out;
  out.reserve(rows.size());
  if (rows.empty()) return out;
  const std::size_t input_dim = rows.front().size();
  if (input_dim == 0) throw ConfigError("label rules need nonempty input rows");
  const std::vector<double> teacher =
      rule_teacher(rule, static_cast<int>(input_dim), num_outputs);
  LabelDraw draw(seed, num_outputs);
  for (std::vector<double>& row : rows) {
    if (row.size() != input_dim) {
      throw ConfigError("label rules need uniform input dimensions");
    }
    DataSample d;
    d.x = std::move(row);
    d.target = rule_target(rule, d.x, num_outputs, teacher, draw);
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

struct PnmImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  int maxval = 0;
  std::vector<double> pixels;  // row-major, channel-interleaved, in [0,1]
};

PnmImage parse_pnm(const std::string& bytes, const std::string& name) {
  std::size_t at = 0;
  auto fail = [&](const std::string& why) -> void {
    throw IngestError("cannot read image '" + name + "': " + why);
  };
  auto skip_space = [&]() {
    while (at < bytes.size()) {
      char c = bytes[at];
      if (c == '#') {
        while (at < bytes.size() && bytes[at] != '\n') ++at;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++at;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> int {
    skip_space();
    std::size_t start = at;
    while (at < bytes.size() && bytes[at] >= '0' && bytes[at] <= '9') ++at;
    if (at == start) fail("malformed header integer");
    return std::stoi(bytes.substr(start, at - start));
  };

  if (bytes.size() < 2) fail("truncated header");
  const std::string magic = bytes.substr(0, 2);
  at = 2;
  PnmImage img;
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    fail("unsupported magic '" + magic + "' (only binary P5/P6)");
  }
  img.width = read_int();
  img.height = read_int();
  img.maxval = read_int();
  if (img.width < 1 || img.height < 1) fail("non-positive dimensions");
  if (img.maxval < 1 || img.maxval > 255) fail("maxval must be in [1,255]");
  if (at >= bytes.size()) fail("missing pixel data");
  ++at;  // single whitespace byte after maxval
  const std::size_t need = static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (bytes.size() - at < need) fail("truncated pixel data");
  img.pixels.resize(need);
  for (std::size_t i = 0; i < need; ++i) {
    img.pixels[i] = static_cast<unsigned char>(bytes[at + i]) /
                    static_cast<double>(img.maxval);
  }
  return img;
}

}  // namespace

std::vector<DataSample> load_image_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir) || !fs::is_directory(dir)) {
    throw IngestError("image dataset directory not found: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) {
              return a.filename().string() < b.filename().string();
            });
  if (files.empty()) return {};

  const fs::path labels_path = dir / "labels.txt";
  if (!fs::exists(labels_path)) {
    throw IngestError("missing labels file: " + labels_path.string());
  }
  std::vector<int> labels;
  {
    const std::string text = read_file(labels_path);
    std::size_t line_no = 0;
    std::size_t at = 0;
    while (at < text.size()) {
      std::size_t end = text.find('\n', at);
      if (end == std::string::npos) end = text.size();
      std::string line = text.substr(at, end - at);
      ++line_no;
      at = end + 1;
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      std::size_t lead = line.find_first_not_of(' ');
      if (lead == std::string::npos) continue;  // blank line
      line = line.substr(lead);
      int value = 0;
      auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), value);
      if (ec != std::errc() || p != line.data() + line.size()) {
        throw IngestError("labels file " + labels_path.string() + " line " +
                          std::to_string(line_no) + ": expected one integer");
      }
      labels.push_back(value);
    }
  }
  if (labels.size() != files.size()) {
    throw IngestError("label count " + std::to_string(labels.size()) +
                      " does not match image count " +
                      std::to_string(files.size()) + " in " + dir.string());
  }

  std::vector<DataSample> out;
  out.reserve(files.size());
  int dim = -1;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const PnmImage img = parse_pnm(read_file(files[i]), files[i].string());
    if (dim < 0) {
      dim = static_cast<int>(img.pixels.size());
    } else if (static_cast<int>(img.pixels.size()) != dim) {
      throw IngestError("image '" + files[i].string() +
                        "' has inconsistent dimensions");
    }
    DataSample s;
    s.x = img.pixels;
    s.target = Target::of_class(labels[i]);
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const std::filesystem::path& path,
                  std::span<const DataSample> samples) {
  std::int64_t m = samples.empty() ? 0 : static_cast<std::int64_t>(samples[0].x.size());
  std::string buf;
  buf.reserve(21 + static_cast<std::size_t>(m) * samples.size() * 8);
  buf.append("GSDS1");
  append_i64(buf, m);
  append_i64(buf, static_cast<std::int64_t>(samples.size()));
  for (const DataSample& s : samples) {
    if (static_cast<std::int64_t>(s.x.size()) != m) {
      throw ValidationError("dataset export needs uniform sample dimension");
    }
    for (double v : s.x) append_f64(buf, v);
  }
  write_file(path, buf);
}

RawDataset load_dataset(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 21 || buf.compare(0, 5, "GSDS1") != 0) {
    throw IngestError("not a GSDS1 dataset file: " + path.string());
  }
  RawDataset d;
  d.input_dim = read_i64(buf, 5);
  const std::int64_t count = read_i64(buf, 13);
  if (d.input_dim < 0 || count < 0) {
    throw IngestError("corrupt GSDS1 header in " + path.string());
  }
  const std::size_t need =
      21 + static_cast<std::size_t>(d.input_dim) * static_cast<std::size_t>(count) * 8;
  if (buf.size() != need) {
    throw IngestError("GSDS1 payload size mismatch in " + path.string());
  }
  std::size_t at = 21;
  d.rows.reserve(static_cast<std::size_t>(count));
  for (std::int64_t s = 0; s < count; ++s) {
    std::vector<double> row(static_cast<std::size_t>(d.input_dim));
    for (auto& v : row) {
      v = read_f64(buf, at);
      at += 8;
    }
    d.rows.push_back(std::move(row));
  }
  return d;
}

}  // namespace gradshield::nn

#include "leopard/stream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "leopard/errors.hpp"

namespace leopard {

namespace {

constexpr double kLatentRadius = 2.0;
constexpr double kLatentStd = 0.35;
constexpr double kViewNoiseStd = 0.05;
constexpr double kDriftScaleMin = 0.25;
constexpr double kDriftScaleMax = 4.0;

Vector class_mean(std::size_t cls, std::size_t n_classes) {
  const double angle = 2.0 * M_PI * static_cast<double>(cls) / static_cast<double>(n_classes);
  return {kLatentRadius * std::cos(angle), kLatentRadius * std::sin(angle)};
}

Matrix random_view_map(std::size_t out_dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix m(out_dim, 2);
  for (double& x : m.data()) x = dist(rng);
  return m;
}

StreamBatch make_batch(Domain domain, std::size_t batch_index, std::size_t batch_size,
                       std::size_t n_classes, const Matrix& view, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> class_dist(0, n_classes - 1);
  std::normal_distribution<double> latent_noise(0.0, kLatentStd);
  std::normal_distribution<double> view_noise(0.0, kViewNoiseStd);
  StreamBatch batch;
  batch.domain = domain;
  batch.batch_index = batch_index;
  std::vector<int> labels;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t cls = class_dist(rng);
    Vector latent = class_mean(cls, n_classes);
    latent[0] += latent_noise(rng);
    latent[1] += latent_noise(rng);
    Vector feat = matvec(view, latent);
    for (double& f : feat) f += view_noise(rng);
    batch.features.append_row(feat);
    labels.push_back(static_cast<int>(cls));
  }
  batch.labels = labels;
  return batch;
}

void minmax_normalize_stream(std::vector<StreamBatch*>& batches) {
  if (batches.empty()) return;
  const std::size_t dim = batches.front()->dim();
  Vector lo(dim, std::numeric_limits<double>::infinity());
  Vector hi(dim, -std::numeric_limits<double>::infinity());
  for (const StreamBatch* b : batches) {
    for (std::size_t i = 0; i < b->size(); ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        lo[j] = std::min(lo[j], b->features(i, j));
        hi[j] = std::max(hi[j], b->features(i, j));
      }
    }
  }
  for (StreamBatch* b : batches) {
    for (std::size_t i = 0; i < b->size(); ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double span = hi[j] - lo[j];
        b->features(i, j) = span > 0.0 ? (b->features(i, j) - lo[j]) / span : 0.0;
      }
    }
  }
}

}  // namespace

std::string domain_name(Domain d) { return d == Domain::Source ? "source" : "target"; }

std::size_t StreamBatch::labelled_count() const {
  if (!labels) return 0;
  return static_cast<std::size_t>(
      std::count_if(labels->begin(), labels->end(), [](int l) { return l >= 0; }));
}

std::size_t StreamConfig::derived_prerecorded_size() const {
  return static_cast<std::size_t>(
      std::llround(label_proportion * static_cast<double>(source_batch_size)));
}

void StreamConfig::validate() const {
  if (n_classes < 2) throw std::invalid_argument("StreamConfig: n_classes must be >= 2");
  if (label_proportion <= 0.0 || label_proportion > 1.0)
    throw std::invalid_argument("StreamConfig: label_proportion must be in (0,1]");
  if (source_batch_size == 0 || target_batch_size == 0)
    throw std::invalid_argument("StreamConfig: batch sizes must be >= 1");
  if (source_drift_batch == target_drift_batch)
    throw std::invalid_argument("StreamConfig: drift batches must differ (asynchronous drift)");
  if (prerecorded_size != 0 && prerecorded_size != derived_prerecorded_size())
    throw std::invalid_argument(
        "StreamConfig: prerecorded_size must equal round(label_proportion * source_batch_size)");
}

SyntheticStreams generate_synthetic_streams(const StreamConfig& config) {
  config.validate();

  std::mt19937_64 map_rng(config.rng_seed * 1000003ULL + 1);
  const Matrix source_view = random_view_map(config.source_dim, map_rng);
  const Matrix target_view = random_view_map(config.target_dim, map_rng);

  SyntheticStreams out;
  std::mt19937_64 drift_rng(config.rng_seed * 1000003ULL + 2);
  std::uniform_real_distribution<double> drift_dist(kDriftScaleMin, kDriftScaleMax);
  out.source_drift.start_batch = config.source_drift_batch;
  out.source_drift.drift_vector.resize(config.source_dim);
  for (double& x : out.source_drift.drift_vector) x = drift_dist(drift_rng);
  out.target_drift.start_batch = config.target_drift_batch;
  out.target_drift.drift_vector.resize(config.target_dim);
  for (double& x : out.target_drift.drift_vector) x = drift_dist(drift_rng);

  std::mt19937_64 source_rng(config.rng_seed * 1000003ULL + 3);
  out.prerecorded = make_batch(Domain::Source, 0, config.source_batch_size,
                               config.n_classes, source_view, source_rng);
  for (std::size_t k = 1; k <= config.n_source_batches; ++k) {
    out.source.push_back(make_batch(Domain::Source, k, config.source_batch_size,
                                    config.n_classes, source_view, source_rng));
  }
  std::mt19937_64 target_rng(config.rng_seed * 1000003ULL + 4);
  for (std::size_t k = 1; k <= config.n_target_batches; ++k) {
    out.target.push_back(make_batch(Domain::Target, k, config.target_batch_size,
                                    config.n_classes, target_view, target_rng));
  }

  for (StreamBatch& b : out.source) {
    if (b.batch_index >= out.source_drift.start_batch)
      b = apply_scaling_hyperplane(b, out.source_drift, &out.zero_norm_warnings);
  }
  for (StreamBatch& b : out.target) {
    if (b.batch_index >= out.target_drift.start_batch)
      b = apply_scaling_hyperplane(b, out.target_drift, &out.zero_norm_warnings);
  }

  std::vector<StreamBatch*> source_all{&out.prerecorded};
  for (StreamBatch& b : out.source) source_all.push_back(&b);
  minmax_normalize_stream(source_all);
  std::vector<StreamBatch*> target_all;
  for (StreamBatch& b : out.target) target_all.push_back(&b);
  minmax_normalize_stream(target_all);
  return out;
}

StreamBatch apply_scaling_hyperplane(const StreamBatch& batch, const DriftSpec& spec,
                                     std::size_t* warning_count) {
  if (spec.drift_vector.size() != batch.dim())
    throw std::invalid_argument("apply_scaling_hyperplane: drift vector dimension mismatch");
  StreamBatch out = batch;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Vector x = batch.features.row(i);
    const double n = norm2(x);
    if (n == 0.0) {
      if (warning_count) ++*warning_count;
      continue;
    }
    for (std::size_t j = 0; j < x.size(); ++j)
      out.features(i, j) = spec.drift_vector[j] * x[j] / n;
  }
  return out;
}

void mask_labels(StreamBatch& prerecorded, std::vector<StreamBatch>& source_batches,
                 std::vector<StreamBatch>& target_batches, const StreamConfig& config) {
  if (!prerecorded.labels)
    throw std::invalid_argument("mask_labels: prerecorded batch has no labels");
  const std::vector<int> original = *prerecorded.labels;
  const std::size_t n_m = config.prerecorded_size != 0 ? config.prerecorded_size
                                                       : config.derived_prerecorded_size();

  std::vector<std::vector<std::size_t>> by_class(config.n_classes);
  for (std::size_t i = 0; i < original.size(); ++i) {
    const int cls = original[i];
    if (cls < 0 || static_cast<std::size_t>(cls) >= config.n_classes)
      throw std::invalid_argument("mask_labels: label outside [0, n_classes)");
    by_class[static_cast<std::size_t>(cls)].push_back(i);
  }
  for (std::size_t c = 0; c < config.n_classes; ++c) {
    if (by_class[c].empty())
      throw std::invalid_argument("mask_labels: class " + std::to_string(c) +
                                  " has no prerecorded samples");
  }

  // Proportional allocation with largest-remainder rounding; remainder ties
  // break toward the lowest class index.
  const double total = static_cast<double>(original.size());
  std::vector<std::size_t> alloc(config.n_classes, 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < config.n_classes; ++c) {
    const double exact =
        static_cast<double>(n_m) * static_cast<double>(by_class[c].size()) / total;
    alloc[c] = std::min(static_cast<std::size_t>(std::floor(exact)), by_class[c].size());
    assigned += alloc[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t cursor = 0;
  while (assigned < n_m && cursor < remainders.size()) {
    const std::size_t c = remainders[cursor].second;
    if (alloc[c] < by_class[c].size()) {
      ++alloc[c];
      ++assigned;
    }
    ++cursor;
    if (cursor == remainders.size() && assigned < n_m) cursor = 0;  // classes exhausted evenly
  }

  std::vector<int> masked(original.size(), -1);
  for (std::size_t c = 0; c < config.n_classes; ++c) {
    for (std::size_t k = 0; k < alloc[c]; ++k) masked[by_class[c][k]] = static_cast<int>(c);
  }
  prerecorded.eval_labels = EvalLabels{original};
  prerecorded.labels = masked;

  for (StreamBatch& b : source_batches) {
    if (b.labels) {
      b.eval_labels = EvalLabels{*b.labels};
      b.labels.reset();
    }
  }
  for (StreamBatch& b : target_batches) {
    if (b.labels) {
      b.eval_labels = EvalLabels{*b.labels};
      b.labels.reset();
    }
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

CsvDataset load_csv_dataset(const std::string& path,
                            const std::optional<std::string>& label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("load_csv_dataset: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("load_csv_dataset: missing header row", 1, 1);
  std::vector<std::string> header = split_csv_line(line);
  for (std::string& h : header) h = trim(h);

  std::size_t label_idx = header.size();
  if (label_column) {
    const auto it = std::find(header.begin(), header.end(), *label_column);
    if (it == header.end())
      throw std::invalid_argument("load_csv_dataset: no column named '" + *label_column + "'");
    label_idx = static_cast<std::size_t>(it - header.begin());
  }

  CsvDataset out;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j != label_idx) out.feature_names.push_back(header[j]);
  }

  std::vector<std::string> raw_labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("load_csv_dataset: wrong cell count", line_no, cells.size());
    Vector feat;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (j == label_idx) {
        raw_labels.push_back(trim(cells[j]));
        continue;
      }
      const std::string cell = trim(cells[j]);
      try {
        std::size_t consumed = 0;
        const double v = std::stod(cell, &consumed);
        if (consumed != cell.size()) throw std::invalid_argument(cell);
        feat.push_back(v);
      } catch (const std::exception&) {
        throw ParseError("load_csv_dataset: non-numeric feature cell '" + cell + "'",
                         line_no, j + 1);
      }
    }
    out.features.append_row(feat);
  }

  // Min-max normalize each feature column; constant columns become zeros.
  for (std::size_t j = 0; j < out.features.cols(); ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < out.features.rows(); ++i) {
      lo = std::min(lo, out.features(i, j));
      hi = std::max(hi, out.features(i, j));
    }
    const double span = hi - lo;
    for (std::size_t i = 0; i < out.features.rows(); ++i)
      out.features(i, j) = span > 0.0 ? (out.features(i, j) - lo) / span : 0.0;
  }

  if (label_column) {
    std::map<std::string, int> classes;
    for (const std::string& l : raw_labels) classes.emplace(l, 0);
    int next = 0;
    for (auto& [name, idx] : classes) {
      idx = next++;
      out.class_names.push_back(name);
    }
    std::vector<int> labels;
    labels.reserve(raw_labels.size());
    for (const std::string& l : raw_labels) labels.push_back(classes[l]);
    out.labels = std::move(labels);
    out.n_classes = classes.size();
  }
  return out;
}

namespace {

void write_csv_header(std::ofstream& out, std::size_t dim, bool with_label) {
  for (std::size_t j = 0; j < dim; ++j) out << "f" << j << ",";
  if (with_label) out << "label,";
  out << "batch_index,domain\n";
}

void write_csv_rows(std::ofstream& out, const StreamBatch& batch, bool with_label) {
  out.precision(17);
  const std::vector<int>* labels = nullptr;
  if (batch.eval_labels)
    labels = &batch.eval_labels->labels;
  else if (batch.labels)
    labels = &*batch.labels;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = 0; j < batch.dim(); ++j) out << batch.features(i, j) << ",";
    if (with_label) out << (labels ? (*labels)[i] : -1) << ",";
    out << batch.batch_index << "," << domain_name(batch.domain) << "\n";
  }
}

}  // namespace

void write_stream_csv(const std::string& path, const std::vector<StreamBatch>& batches) {
  std::ofstream out(path);
  if (!out) throw IoError("write_stream_csv: cannot open " + path);
  if (batches.empty()) return;
  write_csv_header(out, batches.front().dim(), true);
  for (const StreamBatch& b : batches) write_csv_rows(out, b, true);
}

void write_batch_csv(const std::string& path, const StreamBatch& batch) {
  std::ofstream out(path);
  if (!out) throw IoError("write_batch_csv: cannot open " + path);
  write_csv_header(out, batch.dim(), true);
  write_csv_rows(out, batch, true);
}

}  // namespace leopard

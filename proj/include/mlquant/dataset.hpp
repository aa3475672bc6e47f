#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlquant/common.hpp"

namespace mlquant {

using SparseFeatures = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using LabelMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct Sample {
  std::vector<int> indices;

  int size() const { return static_cast<int>(indices.size()); }
};

struct PrevalenceVector {
  enum class Kind { MultiLabel, Simplex };

  Eigen::VectorXd values;
  Kind kind = Kind::MultiLabel;

  int size() const { return static_cast<int>(values.size()); }

  void validate() const {
    double sum = 0.0;
    for (int i = 0; i < values.size(); ++i) {
      if (!(values[i] >= 0.0 && values[i] <= 1.0))
        throw DataError("PrevalenceVector: entry out of [0,1]");
      sum += values[i];
    }
    if (kind == Kind::Simplex && std::abs(sum - 1.0) > 1e-9)
      throw DataError("PrevalenceVector: simplex does not sum to 1");
  }
};

struct MultiLabelDataset {
  SparseFeatures features;       // n x d
  LabelMatrix labels;            // n x L, entries 0/1
  std::vector<std::string> class_names;

  int n() const { return static_cast<int>(labels.rows()); }
  int d() const { return static_cast<int>(features.cols()); }
  int n_classes() const { return static_cast<int>(labels.cols()); }

  void validate() const {
    if (features.rows() != labels.rows())
      throw DataError("MultiLabelDataset: feature/label row mismatch");
    if (static_cast<int>(class_names.size()) != n_classes())
      throw DataError("MultiLabelDataset: class_names size mismatch");
    for (int i = 0; i < labels.rows(); ++i)
      for (int j = 0; j < labels.cols(); ++j)
        if (labels(i, j) > 1) throw DataError("MultiLabelDataset: label entry not 0/1");
  }
};

struct DatasetStats {
  double card = 0.0;
  double dens = 0.0;
  long div = 0;
  double norm_div = 0.0;
  double p_uniq = 0.0;
  double p_max = 0.0;
};

namespace detail {

inline std::string default_class_name(int j) { return "y" + std::to_string(j); }

inline std::vector<std::string> default_class_names(int n_classes) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(n_classes));
  for (int j = 0; j < n_classes; ++j) names.push_back(default_class_name(j));
  return names;
}

inline long parse_long(const std::string& tok, int line_no, const char* what) {
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(tok, &pos);
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": non-numeric " + what + " '" + tok + "'");
  }
  if (pos != tok.size())
    throw DataError("line " + std::to_string(line_no) + ": non-numeric " + what + " '" + tok + "'");
  return v;
}

inline double parse_dbl(const std::string& tok, int line_no, const char* what) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + tok.size() || tok.empty())
    throw DataError("line " + std::to_string(line_no) + ": non-numeric " + what + " '" + tok + "'");
  return v;
}

}  // namespace detail

// Sparse multi-label SVMlight variant. Each line:
//   "<comma-separated 0-based label ids> <fid>:<val> ..."
// A line starting with a space has an empty label field (zero-label row). An
// optional first line "N D L" fixes row count, feature dimension, class count.
inline MultiLabelDataset parse_svmlight_multilabel(std::istream& in) {
  std::vector<std::vector<int>> row_labels;
  std::vector<Eigen::Triplet<double>> trips;
  long declared_rows = -1, declared_dims = -1, declared_classes = -1;
  int max_fid = -1, max_label = -1;
  int line_no = 0, row = 0;
  std::string line;
  bool first_content_line = true;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first_content_line) {
      first_content_line = false;
      // Header is three whitespace-separated integers with no ':' and no ','.
      if (!line.empty() && line[0] != ' ' && line.find(':') == std::string::npos &&
          line.find(',') == std::string::npos) {
        std::istringstream hs(line);
        long a = 0, b = 0, c = 0;
        std::string extra;
        if ((hs >> a >> b >> c) && !(hs >> extra)) {
          declared_rows = a;
          declared_dims = b;
          declared_classes = c;
          continue;
        }
      }
    }
    if (line.empty() && declared_rows < 0) continue;  // blank line without header: skip
    if (declared_rows >= 0 && row >= declared_rows)
      throw DataError("line " + std::to_string(line_no) + ": more rows than header declares");

    std::vector<int> labels_here;
    std::size_t sp = line.find(' ');
    std::string label_field = (sp == std::string::npos) ? line : line.substr(0, sp);
    std::string rest = (sp == std::string::npos) ? std::string() : line.substr(sp + 1);
    if (!label_field.empty()) {
      for (const std::string& tok : split_string(label_field, ',')) {
        long id = detail::parse_long(tok, line_no, "label id");
        if (id < 0) throw DataError("line " + std::to_string(line_no) + ": negative label id");
        if (declared_classes >= 0 && id >= declared_classes)
          throw DataError("line " + std::to_string(line_no) + ": label id " + std::to_string(id) +
                          " >= declared class count " + std::to_string(declared_classes));
        labels_here.push_back(static_cast<int>(id));
        max_label = std::max<int>(max_label, static_cast<int>(id));
      }
    }
    std::istringstream fs(rest);
    std::string tok;
    while (fs >> tok) {
      std::size_t colon = tok.find(':');
      if (colon == std::string::npos)
        throw DataError("line " + std::to_string(line_no) + ": malformed feature '" + tok + "'");
      long fid = detail::parse_long(tok.substr(0, colon), line_no, "feature id");
      double val = detail::parse_dbl(tok.substr(colon + 1), line_no, "feature value");
      if (fid < 0) throw DataError("line " + std::to_string(line_no) + ": negative feature id");
      if (declared_dims >= 0 && fid >= declared_dims)
        throw DataError("line " + std::to_string(line_no) + ": feature id " + std::to_string(fid) +
                        " >= declared dimension " + std::to_string(declared_dims));
      trips.emplace_back(row, static_cast<int>(fid), val);
      max_fid = std::max<int>(max_fid, static_cast<int>(fid));
    }
    row_labels.push_back(std::move(labels_here));
    ++row;
  }
  if (declared_rows >= 0 && row != declared_rows)
    throw DataError("header declares " + std::to_string(declared_rows) + " rows, file has " +
                    std::to_string(row));

  int n = row;
  int d = declared_dims >= 0 ? static_cast<int>(declared_dims) : max_fid + 1;
  int L = declared_classes >= 0 ? static_cast<int>(declared_classes) : max_label + 1;

  MultiLabelDataset ds;
  ds.features.resize(n, std::max(d, 0));
  ds.features.setFromTriplets(trips.begin(), trips.end());
  ds.labels = LabelMatrix::Zero(n, std::max(L, 0));
  for (int i = 0; i < n; ++i)
    for (int lab : row_labels[static_cast<std::size_t>(i)]) ds.labels(i, lab) = 1;
  ds.class_names = detail::default_class_names(std::max(L, 0));
  return ds;
}

inline MultiLabelDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  try {
    return parse_svmlight_multilabel(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void write_svmlight_multilabel(const MultiLabelDataset& ds, std::ostream& out,
                                      bool with_header = true) {
  if (with_header)
    out << ds.n() << ' ' << ds.d() << ' ' << ds.n_classes() << '\n';
  for (int i = 0; i < ds.n(); ++i) {
    bool first = true;
    for (int j = 0; j < ds.n_classes(); ++j) {
      if (ds.labels(i, j)) {
        if (!first) out << ',';
        out << j;
        first = false;
      }
    }
    for (SparseFeatures::InnerIterator it(ds.features, i); it; ++it)
      out << ' ' << it.col() << ':' << format_double(it.value());
    out << '\n';
  }
}

inline void save_dataset(const MultiLabelDataset& ds, const std::string& path,
                         bool with_header = true) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  write_svmlight_multilabel(ds, out, with_header);
}

inline Sample full_sample(const MultiLabelDataset& ds) {
  Sample s;
  s.indices.resize(static_cast<std::size_t>(ds.n()));
  for (int i = 0; i < ds.n(); ++i) s.indices[static_cast<std::size_t>(i)] = i;
  return s;
}

inline PrevalenceVector true_prevalence(const MultiLabelDataset& ds, const Sample& sample) {
  if (sample.indices.empty()) throw DataError("true_prevalence: empty sample");
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(ds.n_classes());
  for (int idx : sample.indices) {
    if (idx < 0 || idx >= ds.n()) throw DataError("true_prevalence: index out of range");
    for (int j = 0; j < ds.n_classes(); ++j) counts[j] += ds.labels(idx, j);
  }
  PrevalenceVector p;
  p.values = counts / static_cast<double>(sample.indices.size());
  p.kind = PrevalenceVector::Kind::MultiLabel;
  return p;
}

inline PrevalenceVector true_prevalence(const MultiLabelDataset& ds) {
  return true_prevalence(ds, full_sample(ds));
}

inline DatasetStats dataset_stats(const MultiLabelDataset& ds) {
  if (ds.n() < 1) throw DataError("dataset_stats: empty dataset");
  DatasetStats st;
  std::unordered_map<std::string, long> labelset_counts;
  long total_labels = 0;
  for (int i = 0; i < ds.n(); ++i) {
    std::string key(static_cast<std::size_t>(ds.n_classes()), '0');
    for (int j = 0; j < ds.n_classes(); ++j) {
      if (ds.labels(i, j)) {
        key[static_cast<std::size_t>(j)] = '1';
        ++total_labels;
      }
    }
    ++labelset_counts[key];
  }
  st.card = static_cast<double>(total_labels) / ds.n();
  st.dens = ds.n_classes() > 0 ? st.card / ds.n_classes() : 0.0;
  st.div = static_cast<long>(labelset_counts.size());
  st.norm_div = ds.n_classes() > 0 ? static_cast<double>(st.div) / ds.n_classes() : 0.0;
  long uniq = 0, modal = 0;
  for (const auto& [key, cnt] : labelset_counts) {
    if (cnt == 1) ++uniq;
    modal = std::max(modal, cnt);
  }
  st.p_uniq = static_cast<double>(uniq) / ds.n();
  st.p_max = static_cast<double>(modal) / ds.n();
  return st;
}

// Keeps only the listed classes (in the given order). Used to align a test set
// with the codeframe that survives rare-class removal on the training split.
inline MultiLabelDataset select_classes(const MultiLabelDataset& ds,
                                        const std::vector<int>& classes) {
  if (classes.empty()) throw DataError("select_classes: empty class list");
  MultiLabelDataset out;
  out.features = ds.features;
  out.labels = LabelMatrix::Zero(ds.n(), static_cast<int>(classes.size()));
  out.class_names.reserve(classes.size());
  for (std::size_t k = 0; k < classes.size(); ++k) {
    int j = classes[k];
    if (j < 0 || j >= ds.n_classes()) throw DataError("select_classes: class index out of range");
    for (int i = 0; i < ds.n(); ++i) out.labels(i, static_cast<int>(k)) = ds.labels(i, j);
    out.class_names.push_back(ds.class_names[static_cast<std::size_t>(j)]);
  }
  return out;
}

struct RareClassResult {
  MultiLabelDataset dataset;
  std::vector<int> kept_classes;  // original indices of surviving classes, ascending
};

inline RareClassResult remove_rare_classes(const MultiLabelDataset& ds, int min_train_positives) {
  if (min_train_positives < 0) throw ConfigError("remove_rare_classes: min must be >= 0");
  std::vector<int> kept;
  for (int j = 0; j < ds.n_classes(); ++j) {
    long pos = 0;
    for (int i = 0; i < ds.n(); ++i) pos += ds.labels(i, j);
    if (pos >= min_train_positives) kept.push_back(j);
  }
  if (kept.empty()) throw DataError("remove_rare_classes: all classes removed");
  RareClassResult res;
  res.dataset = select_classes(ds, kept);
  res.kept_classes = std::move(kept);
  return res;
}

// Row-wise concatenation; feature dimensions are padded to the wider of the two.
inline MultiLabelDataset concat_rows(const MultiLabelDataset& a, const MultiLabelDataset& b) {
  if (a.n_classes() != b.n_classes())
    throw DataError("concat_rows: class count mismatch");
  int d = std::max(a.d(), b.d());
  MultiLabelDataset out;
  out.features.resize(a.n() + b.n(), d);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(a.features.nonZeros() + b.features.nonZeros()));
  for (int i = 0; i < a.n(); ++i)
    for (SparseFeatures::InnerIterator it(a.features, i); it; ++it)
      trips.emplace_back(i, static_cast<int>(it.col()), it.value());
  for (int i = 0; i < b.n(); ++i)
    for (SparseFeatures::InnerIterator it(b.features, i); it; ++it)
      trips.emplace_back(a.n() + i, static_cast<int>(it.col()), it.value());
  out.features.setFromTriplets(trips.begin(), trips.end());
  out.labels = LabelMatrix::Zero(a.n() + b.n(), a.n_classes());
  out.labels.topRows(a.n()) = a.labels;
  out.labels.bottomRows(b.n()) = b.labels;
  out.class_names = a.class_names;
  return out;
}

// Materializes the selected rows as a standalone dataset (same codeframe).
inline MultiLabelDataset subset_rows(const MultiLabelDataset& ds, const std::vector<int>& rows) {
  MultiLabelDataset out;
  out.features.resize(static_cast<int>(rows.size()), ds.d());
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    int src = rows[r];
    if (src < 0 || src >= ds.n()) throw DataError("subset_rows: index out of range");
    for (SparseFeatures::InnerIterator it(ds.features, src); it; ++it)
      trips.emplace_back(static_cast<int>(r), static_cast<int>(it.col()), it.value());
  }
  out.features.setFromTriplets(trips.begin(), trips.end());
  out.labels = LabelMatrix::Zero(static_cast<int>(rows.size()), ds.n_classes());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.labels.row(static_cast<int>(r)) = ds.labels.row(rows[r]);
  out.class_names = ds.class_names;
  return out;
}

}  // namespace mlquant

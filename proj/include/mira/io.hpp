// File formats: dataset CSV (dim_0,...,dim_{d-1},label,domain), the per-epoch
// metrics.csv, sweep.csv, and embedding dumps. Doubles are printed with
// %.17g everywhere so outputs are reproducible byte for byte and values
// round-trip exactly.
#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mira/config.hpp"
#include "mira/harness.hpp"
#include "mira/network.hpp"
#include "mira/synthgen.hpp"

namespace mira {
namespace io {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_dataset_csv(const DomainDataset& ds, const std::string& path,
                              bool hide_labels = false) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  for (std::size_t c = 0; c < ds.dim(); ++c) os << "dim_" << c << ',';
  os << "label,domain\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t c = 0; c < ds.dim(); ++c) os << fmt(ds.features(i, c)) << ',';
    const int label = (hide_labels || ds.labels.empty()) ? -1 : ds.labels[i];
    os << label << ',' << to_string(ds.domain) << '\n';
  }
  if (!os) throw ConfigError("write failed: " + path);
}

inline DomainDataset read_dataset_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open: " + path);
  std::string header;
  if (!std::getline(is, header)) throw ConfigError("empty csv: " + path);

  std::vector<std::string> cols;
  {
    std::istringstream hs(header);
    std::string col;
    while (std::getline(hs, col, ',')) cols.push_back(col);
  }
  if (cols.size() < 3 || cols[cols.size() - 2] != "label" || cols.back() != "domain")
    throw ConfigError("bad csv header in " + path +
                      " (expected dim_*,label,domain)");
  const std::size_t d = cols.size() - 2;

  std::vector<Vec> rows;
  std::vector<int> labels;
  std::string domain_name;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    Vec row(d);
    for (std::size_t c = 0; c < d; ++c) {
      if (!std::getline(ls, field, ','))
        throw ConfigError("short row at " + path + ":" + std::to_string(lineno));
      row[c] = std::stod(field);
    }
    if (!std::getline(ls, field, ','))
      throw ConfigError("missing label at " + path + ":" + std::to_string(lineno));
    labels.push_back(std::stoi(field));
    if (!std::getline(ls, field, ','))
      throw ConfigError("missing domain at " + path + ":" + std::to_string(lineno));
    if (domain_name.empty()) domain_name = field;
    else if (domain_name != field)
      throw ConfigError("mixed domains in " + path + " at line " +
                        std::to_string(lineno));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("no data rows in " + path);
  if (domain_name != "source" && domain_name != "target")
    throw ConfigError("unknown domain '" + domain_name + "' in " + path);

  DomainDataset ds;
  ds.features = Mat::from_rows(rows);
  ds.labels = std::move(labels);
  ds.domain = domain_name == "source" ? Domain::source : Domain::target;
  ds.generator_spec = "csv:" + path;
  return ds;
}

/// Sidecar with per-sample sub-pattern tags (row index, label, subpattern).
inline void write_patterns_csv(const DomainDataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  os << "index,label,subpattern\n";
  for (std::size_t i = 0; i < ds.subpatterns.size(); ++i)
    os << i << ',' << (ds.labels.empty() ? -1 : ds.labels[i]) << ','
       << ds.subpatterns[i] << '\n';
}

inline std::vector<int> read_patterns_csv(const std::string& path,
                                          std::size_t expected_rows) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open: " + path);
  std::string line;
  std::getline(is, line);  // header
  std::vector<int> tags(expected_rows, -1);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f0, f1, f2;
    std::getline(ls, f0, ',');
    std::getline(ls, f1, ',');
    std::getline(ls, f2, ',');
    const auto idx = static_cast<std::size_t>(std::stoul(f0));
    if (idx >= expected_rows)
      throw ConfigError("pattern index out of range in " + path);
    tags[idx] = std::stoi(f2);
  }
  return tags;
}

inline void write_metrics_csv(const std::vector<EpochMetrics>& metrics,
                              const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  os << "epoch,source_ce,target_aux,mirror_f,mirror_g,total,target_accuracy,"
        "anchor_gap_f,anchor_gap_g,inter_class_dist_f,pseudo_label_agreement\n";
  for (const auto& m : metrics) {
    os << m.epoch << ',' << fmt(m.losses.source_ce) << ',' << fmt(m.losses.target_aux)
       << ',' << fmt(m.losses.mirror_f) << ',' << fmt(m.losses.mirror_g) << ','
       << fmt(m.losses.total) << ',' << fmt(m.target_accuracy) << ','
       << fmt(m.anchor_gap_f) << ',' << fmt(m.anchor_gap_g) << ','
       << fmt(m.inter_class_dist_f) << ',' << fmt(m.pseudo_label_agreement) << '\n';
  }
  if (!os) throw ConfigError("write failed: " + path);
}

inline void write_sweep_csv(const SweepResult& result, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  os << "axis,value,seed,accuracy,failed,error\n";
  for (const auto& c : result.cells)
    os << c.axis << ',' << c.value << ',' << c.seed << ',' << fmt(c.accuracy) << ','
       << (c.failed ? 1 : 0) << ',' << c.error << '\n';
}

inline void write_sweep_summary_csv(const SweepResult& result,
                                    const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  os << "value,mean_accuracy,std_accuracy,completed\n";
  for (const auto& r : result.summary)
    os << r.value << ',' << fmt(r.mean_accuracy) << ',' << fmt(r.std_accuracy) << ','
       << r.completed << '\n';
}

/// Per-sample f and g embeddings with domain tags, for external plotting.
inline void write_embeddings_csv(const ModelParams& params,
                                 const std::vector<const DomainDataset*>& sets,
                                 const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  for (std::size_t c = 0; c < params.dims.feature; ++c) os << "f_" << c << ',';
  for (std::size_t c = 0; c < params.dims.embed; ++c) os << "g_" << c << ',';
  os << "label,domain\n";
  for (const auto* ds : sets) {
    const ForwardTrace t = forward(params, ds->features);
    for (std::size_t i = 0; i < ds->size(); ++i) {
      for (std::size_t c = 0; c < params.dims.feature; ++c)
        os << fmt(t.f()(i, c)) << ',';
      for (std::size_t c = 0; c < params.dims.embed; ++c) os << fmt(t.g(i, c)) << ',';
      os << (ds->labels.empty() ? -1 : ds->labels[i]) << ',' << to_string(ds->domain)
         << '\n';
    }
  }
}

}  // namespace io
}  // namespace mira

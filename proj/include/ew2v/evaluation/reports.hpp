// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ew2v/evaluation/decode.hpp"
#include "ew2v/evaluation/similarity.hpp"
#include "ew2v/evaluation/wer.hpp"

namespace ew2v::evaluation {

namespace fs = std::filesystem;

inline constexpr double kCleanSnr = std::numeric_limits<double>::infinity();

struct WerRow {
  std::string noise_type;  // "clean" for the clean row
  double snr_db = 0.0;     // +inf for the clean row
  std::size_t n_utt = 0;
  EditCounts counts;
  double wer = 0.0;
};

struct Transcription {
  std::string utt_id;
  std::string noise_type;
  double snr_db = 0.0;
  std::string reference;
  std::string hypothesis;
};

inline WerRow score_cell(const std::string& type, double snr, const std::vector<std::pair<std::string, std::string>>& ref_hyp) {
  WerRow r{type, snr, ref_hyp.size(), {}, 0.0};
  for (const auto& [ref, hyp] : ref_hyp) r.counts += align_words(split_words(ref), split_words(hyp));
  r.wer = r.counts.n_ref ? r.counts.wer() : 0.0;
  return r;
}

// Greedy-decodes every grid cell plus the clean test set.
inline std::vector<WerRow> evaluate_wer(model::Wav2VecModel<float>& m, const TestGrid& grid,
                                        std::vector<Transcription>* transcripts = nullptr) {
  std::vector<WerRow> rows;
  auto run = [&](const std::string& type, double snr, const std::vector<const audio::Waveform*>& waves) {
    std::vector<std::pair<std::string, std::string>> rh;
    for (std::size_t i = 0; i < waves.size(); ++i) {
      const std::string hyp = greedy_decode(training::infer_logits(m, waves[i]->samples));
      rh.emplace_back(grid.clean[i].transcript, hyp);
      if (transcripts) transcripts->push_back({grid.clean[i].id, type, snr, grid.clean[i].transcript, hyp});
    }
    rows.push_back(score_cell(type, snr, rh));
  };
  for (const auto& cell : grid.cells) {
    std::vector<const audio::Waveform*> w;
    for (const auto& p : cell.pairs) w.push_back(&p.noisy);
    run(cell.noise_type, cell.snr_db, w);
  }
  std::vector<const audio::Waveform*> w;
  for (const auto& u : grid.clean) w.push_back(&u.wave);
  run("clean", kCleanSnr, w);
  return rows;
}

// Codebook utilization over a set of waveforms: mean soft probability
// softmax(logits / tau) and hard argmax counts, per group and entry.
struct CodebookRow {
  std::size_t group = 0, entry = 0;
  double mean_probability = 0.0;
  std::size_t hard_count = 0;
};

inline std::vector<CodebookRow> codebook_usage(model::Wav2VecModel<float>& m, const std::vector<const audio::Waveform*>& waves,
                                               double tau) {
  auto& q = m.quantizer();
  const std::size_t G = q.config().groups, V = q.config().entries;
  std::vector<double> prob(G * V, 0.0);
  std::vector<std::size_t> hard(G * V, 0);
  std::size_t frames = 0;
  for (const auto* w : waves) {
    Tape<float> tape;
    const Tensor<float> l = q.logits(tape, m.encoder().forward(tape, w->samples)).value();
    for (std::size_t t = 0; t < l.rows(); ++t, ++frames) {
      for (std::size_t g = 0; g < G; ++g) {
        std::vector<double> y(V);
        for (std::size_t v = 0; v < V; ++v) y[v] = l.at(t, g * V + v) / tau;
        hard[g * V + static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin())]++;
        ops::softmax_inplace(std::span<double>(y));
        for (std::size_t v = 0; v < V; ++v) prob[g * V + v] += y[v];
      }
    }
  }
  std::vector<CodebookRow> rows;
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t v = 0; v < V; ++v)
      rows.push_back({g, v, frames ? prob[g * V + v] / static_cast<double>(frames) : 0.0, hard[g * V + v]});
  return rows;
}

// ---------------------------------------------------------------------------
// Emission

inline std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Noise types keep first-appearance order; SNRs ascend within a type.
template <typename Row>
std::vector<Row> ordered(std::vector<Row> rows) {
  std::map<std::string, std::size_t> first;
  for (const auto& r : rows) first.emplace(r.noise_type, first.size());
  std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
    const auto fa = first.at(a.noise_type), fb = first.at(b.noise_type);
    return fa != fb ? fa < fb : a.snr_db < b.snr_db;
  });
  return rows;
}

inline std::string wer_csv(const std::vector<WerRow>& rows) {
  std::string s = "noise_type,snr_db,n_utt,n_ref_words,S,D,I,wer\n";
  for (const auto& r : ordered(rows)) {
    s += r.noise_type + ',' + num(r.snr_db) + ',' + std::to_string(r.n_utt) + ',' + std::to_string(r.counts.n_ref) + ',' +
         std::to_string(r.counts.substitutions) + ',' + std::to_string(r.counts.deletions) + ',' +
         std::to_string(r.counts.insertions) + ',' + num(r.wer) + '\n';
  }
  return s;
}

inline std::string similarity_csv(const std::vector<SimilarityRow>& rows) {
  std::string s = "model_id,noise_type,snr_db,n_frames,mean_cos\n";
  std::vector<std::string> models;
  for (const auto& r : rows)
    if (std::find(models.begin(), models.end(), r.model_id) == models.end()) models.push_back(r.model_id);
  for (const auto& id : models) {
    std::vector<SimilarityRow> block;
    for (const auto& r : rows)
      if (r.model_id == id) block.push_back(r);
    for (const auto& r : ordered(block))
      s += r.model_id + ',' + r.noise_type + ',' + num(r.snr_db) + ',' + std::to_string(r.n_frames) + ',' + num(r.mean_cos) + '\n';
  }
  return s;
}

inline std::string codebook_csv(const std::vector<CodebookRow>& rows) {
  std::string s = "group,entry,mean_probability,hard_count\n";
  for (const auto& r : rows)
    s += std::to_string(r.group) + ',' + std::to_string(r.entry) + ',' + num(r.mean_probability) + ',' +
         std::to_string(r.hard_count) + '\n';
  return s;
}

inline std::string transcripts_csv(const std::vector<Transcription>& rows) {
  std::string s = "utt_id,noise_type,snr_db,reference,hypothesis\n";
  for (const auto& r : rows)
    s += r.utt_id + ',' + r.noise_type + ',' + num(r.snr_db) + ",\"" + r.reference + "\",\"" + r.hypothesis + "\"\n";
  return s;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

inline void require_writable_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("output directory '" + dir.string() + "' is not writable");
}

struct Series {
  std::string name;
  std::vector<double> x, y;
};

// Minimal line plot; deterministic text for identical input.
inline std::string svg_line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                 const std::vector<Series>& series) {
  const double W = 480, H = 320, L = 60, R = 130, T = 30, B = 45;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"320\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"480\" height=\"320\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(W / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" + title + "</text>\n";
  s += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(H - B) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" + num(H - B) + "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
    s += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(H - B + 15) + "\" text-anchor=\"middle\">" + num(std::round(xv * 100) / 100) + "</text>\n";
    s += "<text x=\"" + num(L - 5) + "\" y=\"" + num(py(yv) + 4) + "\" text-anchor=\"end\">" + num(std::round(yv * 1000) / 1000) + "</text>\n";
  }
  s += "<text x=\"" + num((L + W - R) / 2) + "\" y=\"" + num(H - 8) + "\" text-anchor=\"middle\">" + xlabel + "</text>\n";
  s += "<text x=\"14\" y=\"" + num((T + H - B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " + num((T + H - B) / 2) + ")\">" + ylabel + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* c = colors[k % 6];
    std::string pts;
    for (std::size_t i = 0; i < series[k].x.size(); ++i) pts += num(px(series[k].x[i])) + "," + num(py(series[k].y[i])) + " ";
    s += "<polyline fill=\"none\" stroke=\"" + std::string(c) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    s += "<text x=\"" + num(W - R + 10) + "\" y=\"" + num(T + 14 * (k + 1)) + "\" fill=\"" + c + "\">" + series[k].name + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

// One plot per noise type: WER against SNR for each named report.
inline void emit_wer_plots(const fs::path& dir, const std::vector<std::pair<std::string, std::vector<WerRow>>>& reports) {
  std::vector<std::string> types;
  for (const auto& [name, rows] : reports)
    for (const auto& r : rows)
      if (r.noise_type != "clean" && std::find(types.begin(), types.end(), r.noise_type) == types.end()) types.push_back(r.noise_type);
  for (const auto& t : types) {
    std::vector<Series> ss;
    for (const auto& [name, rows] : reports) {
      Series s{name, {}, {}};
      for (const auto& r : ordered(rows))
        if (r.noise_type == t) s.x.push_back(r.snr_db), s.y.push_back(r.wer);
      ss.push_back(std::move(s));
    }
    write_text(dir / ("wer_" + t + ".svg"), svg_line_plot("WER, " + t + " noise", "SNR (dB)", "WER", ss));
  }
}

inline void emit_similarity_plots(const fs::path& dir, const std::vector<SimilarityRow>& rows) {
  std::vector<std::string> types, models;
  for (const auto& r : rows) {
    if (std::find(types.begin(), types.end(), r.noise_type) == types.end()) types.push_back(r.noise_type);
    if (std::find(models.begin(), models.end(), r.model_id) == models.end()) models.push_back(r.model_id);
  }
  for (const auto& t : types) {
    std::vector<Series> ss;
    for (const auto& m : models) {
      Series s{m, {}, {}};
      for (const auto& r : ordered(rows))
        if (r.noise_type == t && r.model_id == m) s.x.push_back(r.snr_db), s.y.push_back(r.mean_cos);
      ss.push_back(std::move(s));
    }
    write_text(dir / ("similarity_" + t + ".svg"), svg_line_plot("Similarity to clean reference, " + t + " noise",
                                                                 "SNR (dB)", "mean cosine", ss));
  }
}

}  // namespace ew2v::evaluation

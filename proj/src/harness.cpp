#include "cvxbn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "cvxbn/errors.hpp"
#include "cvxbn/mdl_selection.hpp"
#include "cvxbn/ordering.hpp"
#include "cvxbn/random.hpp"

namespace cvxbn {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

Dataset parse_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    auto line = trim(text.substr(start, pos - start));
    if (!line.empty()) lines.push_back(line);
    start = pos + 1;
  }
  if (lines.empty()) throw InputError("csv: empty file");
  const auto header = split_commas(lines[0]);
  std::vector<VariableDomain> domains(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    domains[c].name = std::string(trim(header[c]));
    if (domains[c].name.empty()) throw InputError("csv: empty variable name in column " + std::to_string(c + 1));
  }
  if (lines.size() < 2) throw InputError("csv: no data rows");
  std::vector<int> cells;
  cells.reserve((lines.size() - 1) * header.size());
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split_commas(lines[r]);
    if (fields.size() != header.size())
      throw InputError("csv: line " + std::to_string(r + 1) + " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(header.size()));
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto label = trim(fields[c]);
      if (label.empty())
        throw InputError("csv: missing value at line " + std::to_string(r + 1) + ", column " +
                         std::to_string(c + 1));
      int idx = domains[c].index_of(label);
      if (idx < 0) {
        idx = domains[c].cardinality();
        domains[c].values.emplace_back(label);
      }
      cells.push_back(idx);
    }
  }
  return Dataset(std::move(domains), std::move(cells));
}

Dataset load_csv(const std::string& path) { return parse_csv(read_file(path)); }

std::string format_csv(const Dataset& data) {
  std::string out;
  for (std::size_t c = 0; c < data.vars(); ++c) {
    if (c) out += ',';
    out += data.domain(c).name;
  }
  out += '\n';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t c = 0; c < data.vars(); ++c) {
      if (c) out += ',';
      out += data.domain(c).values[data.at(r, c)];
    }
    out += '\n';
  }
  return out;
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << format_csv(data);
}

Dataset conform(const Dataset& data, std::span<const VariableDomain> domains) {
  std::vector<std::size_t> source(domains.size());
  for (std::size_t j = 0; j < domains.size(); ++j) {
    std::size_t c = 0;
    while (c < data.vars() && data.domain(c).name != domains[j].name) ++c;
    if (c == data.vars()) throw InputError("data lacks variable '" + domains[j].name + "'");
    source[j] = c;
  }
  // Label translation table per column.
  std::vector<std::vector<int>> remap(domains.size());
  for (std::size_t j = 0; j < domains.size(); ++j) {
    const auto& from = data.domain(source[j]);
    for (const auto& label : from.values) {
      const int idx = domains[j].index_of(label);
      remap[j].push_back(idx);
    }
  }
  std::vector<int> cells;
  cells.reserve(data.rows() * domains.size());
  for (std::size_t r = 0; r < data.rows(); ++r)
    for (std::size_t j = 0; j < domains.size(); ++j) {
      const int v = remap[j][data.at(r, source[j])];
      if (v < 0)
        throw InputError("value '" + data.domain(source[j]).values[data.at(r, source[j])] +
                         "' of variable '" + domains[j].name + "' is not in the model's domain");
      cells.push_back(v);
    }
  return Dataset(std::vector<VariableDomain>(domains.begin(), domains.end()), std::move(cells));
}

std::pair<Dataset, Dataset> split(const Dataset& data, std::size_t train_count,
                                  std::uint64_t seed) {
  const std::size_t T = data.rows();
  if (train_count > T) throw InputError("split: train count exceeds row count");
  std::vector<std::size_t> idx(T);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(mix_seed(seed));
  for (std::size_t i = T; i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_count));
  std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(train_count), idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {data.subset(train), data.subset(test)};
}

std::pair<Dataset, Dataset> split(const Dataset& data, double train_ratio, std::uint64_t seed) {
  if (!(train_ratio >= 0.0 && train_ratio <= 1.0)) throw InputError("split: ratio must be in [0, 1]");
  const auto count = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(data.rows())));
  return split(data, count, seed);
}

SyntheticNet generate_synthetic(const SyntheticSpec& spec) {
  const std::size_t n = spec.n;
  if (n == 0) throw InputError("synthetic: need at least one variable");
  if (spec.edges > n * (n - 1) / 2) throw InputError("synthetic: too many edges for n");
  if (spec.cardinality < 1) throw InputError("synthetic: cardinality must be positive");
  if (!(spec.concentration > 0.0)) throw InputError("synthetic: concentration must be positive");

  Rng rng(mix_seed(spec.seed));
  SyntheticNet out;
  out.order.resize(n);
  std::iota(out.order.begin(), out.order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(out.order[i - 1], out.order[uniform_index(rng, i)]);

  std::vector<Edge> pairs;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) pairs.emplace_back(out.order[a], out.order[b]);
  // Partial Fisher-Yates: the first `edges` entries are a uniform subset.
  for (std::size_t k = 0; k < spec.edges; ++k)
    std::swap(pairs[k], pairs[k + uniform_index(rng, pairs.size() - k)]);
  out.parents.assign(n, {});
  for (std::size_t k = 0; k < spec.edges; ++k) out.parents[pairs[k].second].push_back(pairs[k].first);
  for (auto& ps : out.parents) std::sort(ps.begin(), ps.end());

  std::vector<VariableDomain> domains(n);
  for (std::size_t j = 0; j < n; ++j) {
    domains[j].name = "x" + std::to_string(j);
    for (int v = 0; v < spec.cardinality; ++v) domains[j].values.push_back(std::to_string(v));
  }
  std::gamma_distribution<double> gamma(spec.concentration, 1.0);
  std::vector<std::vector<std::vector<double>>> tables(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t configs = 1;
    for (std::size_t k = 0; k < out.parents[j].size(); ++k) configs *= static_cast<std::size_t>(spec.cardinality);
    tables[j].resize(configs);
    for (auto& row : tables[j]) {
      row.resize(static_cast<std::size_t>(spec.cardinality));
      double sum = 0.0;
      for (auto& p : row) sum += (p = gamma(rng));
      for (auto& p : row) p = sum > 0.0 ? p / sum : 1.0 / static_cast<double>(row.size());
    }
  }
  out.net = table_net(std::move(domains), out.parents, tables, out.order);
  return out;
}

const std::vector<std::string>& known_learners() {
  static const std::vector<std::string> names{
      "convex", "convex-reopt", "convex-order", "convex-order-reopt", "k2-bic",
      "k2-bde", "hc-bic",       "hc-bde",       "truth"};
  return names;
}

double CellResult::mean() const {
  if (losses.empty()) return std::nan("");
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

double CellResult::sd() const {
  if (losses.size() < 2) return 0.0;
  const double m = mean();
  double ss = 0.0;
  for (double v : losses) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(losses.size() - 1));
}

double CellResult::mean_seconds() const {
  if (seconds.empty()) return 0.0;
  return std::accumulate(seconds.begin(), seconds.end(), 0.0) / static_cast<double>(seconds.size());
}

namespace {

bool uses_beta(const std::string& learner) {
  return learner.starts_with("convex");
}

}  // namespace

BayesNet fit_learner(const std::string& learner, const Dataset& train, std::span<const int> order,
                     double beta, std::uint64_t seed, const BayesNet* truth) {
  if (learner == "convex") return learn_fixed_order(train, order, beta).net;
  if (learner == "convex-reopt")
    return learn_fixed_order(train, order, beta, {}, RoundingRule::Reoptimized).net;
  if (learner == "convex-order") return learn_order(train, beta).solution.net;
  if (learner == "convex-order-reopt")
    return learn_order(train, beta, {}, RoundingRule::Reoptimized).solution.net;
  if (learner == "k2-bic" || learner == "k2-bde") {
    K2Options opt;
    opt.score = learner == "k2-bic" ? ScoreKind::Bic : ScoreKind::Bde;
    return k2_search(train, order, opt);
  }
  if (learner == "hc-bic" || learner == "hc-bde") {
    HillClimbOptions opt;
    opt.score = learner == "hc-bic" ? ScoreKind::Bic : ScoreKind::Bde;
    opt.seed = seed;
    return hill_climb(train, opt);
  }
  if (learner == "truth") {
    if (!truth) throw InputError("learner 'truth' needs a synthetic generator");
    return *truth;
  }
  throw InputError("unknown learner '" + learner + "'");
}

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::function<void(const std::string&)>& progress) {
  if (spec.learners.empty()) throw InputError("experiment: no learners");
  if (spec.train == 0 || spec.test == 0 || spec.repeats == 0)
    throw InputError("experiment: sizes and repeats must be positive");
  if (spec.beta_grid.empty()) throw InputError("experiment: empty beta grid");
  for (const auto& l : spec.learners)
    if (std::find(known_learners().begin(), known_learners().end(), l) == known_learners().end())
      throw InputError("unknown learner '" + l + "'");

  ExperimentResult result;
  result.learners = spec.learners;
  using Clock = std::chrono::steady_clock;

  for (std::size_t d = 0; d < spec.datasets.size(); ++d) {
    const auto& ds = spec.datasets[d];
    result.datasets.push_back(ds.name);
    std::optional<SyntheticNet> gen;
    std::vector<int> order;
    if (ds.synthetic) {
      gen = generate_synthetic(*ds.synthetic);
      order = gen->order;
    } else {
      if (ds.data.rows() <= spec.train)
        throw InputError("experiment: dataset '" + ds.name + "' has too few rows for the train size");
      // Without a known order the column order is used.
      order.resize(ds.data.vars());
      std::iota(order.begin(), order.end(), 0);
    }
    const BayesNet* truth = gen ? &gen->net : nullptr;

    auto draw = [&](std::uint64_t stream) -> std::pair<Dataset, Dataset> {
      if (gen)
        return {sample(gen->net, spec.train, derive_seed(spec.seed, d, 2 * stream)),
                sample(gen->net, spec.test, derive_seed(spec.seed, d, 2 * stream + 1))};
      return split(ds.data, spec.train, derive_seed(spec.seed, d, 2 * stream));
    };

    std::vector<CellResult> row(spec.learners.size());
    // Beta is chosen once per convex learner on a preliminary split.
    const std::uint64_t prelim_stream = spec.repeats + 1000;
    auto [prelim_train, prelim_test] = draw(prelim_stream);
    for (std::size_t l = 0; l < spec.learners.size(); ++l) {
      if (!uses_beta(spec.learners[l])) continue;
      double best = std::numeric_limits<double>::infinity();
      row[l].beta = spec.beta_grid.front();
      for (double beta : spec.beta_grid) {
        try {
          const auto net = fit_learner(spec.learners[l], prelim_train, order, beta, 0, truth);
          const double loss = neg_loglik(net, prelim_test);
          if (loss < best) {
            best = loss;
            row[l].beta = beta;
          }
        } catch (const std::exception&) {
        }
      }
      if (progress) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s: %s beta=%g", ds.name.c_str(), spec.learners[l].c_str(),
                      row[l].beta);
        progress(buf);
      }
    }

    for (std::size_t r = 0; r < spec.repeats; ++r) {
      auto [train, test] = draw(r);
      for (std::size_t l = 0; l < spec.learners.size(); ++l) {
        const auto t0 = Clock::now();
        try {
          const auto net = fit_learner(spec.learners[l], train, order, row[l].beta,
                                       derive_seed(spec.seed, 7919 + d, r), truth);
          const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
          row[l].losses.push_back(neg_loglik(net, test));
          row[l].seconds.push_back(secs);
        } catch (const std::exception& e) {
          ++row[l].failures;
          row[l].last_error = e.what();
        }
      }
      if (progress) progress(ds.name + ": repeat " + std::to_string(r + 1) + "/" + std::to_string(spec.repeats));
    }
    result.cells.push_back(std::move(row));
  }
  return result;
}

namespace {

std::string cell_text(const CellResult& c) {
  if (c.losses.empty()) return "fail";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f±%.4f", c.mean(), c.sd());
  std::string s = buf;
  if (c.failures) s += "(" + std::to_string(c.failures) + " failed)";
  return s;
}

std::string seconds_text(const CellResult& c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", c.mean_seconds());
  return buf;
}

// Display width of a UTF-8 string, counting code points.
std::size_t width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char ch : s)
    if ((ch & 0xC0) != 0x80) ++w;
  return w;
}

}  // namespace

std::string format_results(const ExperimentResult& result) {
  std::string out = "dataset";
  for (const auto& l : result.learners) out += "\t" + l;
  out += '\n';
  for (std::size_t d = 0; d < result.datasets.size(); ++d) {
    out += result.datasets[d];
    for (const auto& c : result.cells[d]) out += "\t" + cell_text(c);
    out += '\n';
  }
  return out;
}

std::string format_runtimes(const ExperimentResult& result) {
  std::string out = "runtime_s";
  for (std::size_t l = 0; l < result.learners.size(); ++l) {
    CellResult pooled;
    for (const auto& row : result.cells)
      pooled.seconds.insert(pooled.seconds.end(), row[l].seconds.begin(), row[l].seconds.end());
    out += "\t" + seconds_text(pooled);
  }
  out += '\n';
  return out;
}

std::string format_table(const ExperimentResult& result) {
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"dataset"});
  for (const auto& l : result.learners) grid.back().push_back(l);
  for (std::size_t d = 0; d < result.datasets.size(); ++d) {
    grid.push_back({result.datasets[d]});
    for (const auto& c : result.cells[d]) grid.back().push_back(cell_text(c));
  }
  for (std::size_t d = 0; d < result.datasets.size(); ++d) {
    grid.push_back({result.datasets[d] + " (s)"});
    for (const auto& c : result.cells[d]) grid.back().push_back(seconds_text(c));
  }
  std::vector<std::size_t> widths(grid[0].size(), 0);
  for (const auto& row : grid)
    for (std::size_t k = 0; k < row.size(); ++k) widths[k] = std::max(widths[k], width(row[k]));
  std::string out;
  for (const auto& row : grid) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      out += row[k];
      if (k + 1 < row.size()) out += std::string(widths[k] - width(row[k]) + 2, ' ');
    }
    out += '\n';
  }
  return out;
}

}  // namespace cvxbn

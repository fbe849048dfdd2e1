// Command-line front end.
//
// Exit codes: 0 success, 1 input error, 2 convergence / stall / infeasible
// setup, 3 invariant violation.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cvxbn/baselines.hpp"
#include "cvxbn/core_model.hpp"
#include "cvxbn/errors.hpp"
#include "cvxbn/featuregen.hpp"
#include "cvxbn/harness.hpp"
#include "cvxbn/mdl_selection.hpp"
#include "cvxbn/ordering.hpp"
#include "cvxbn/random.hpp"

using namespace cvxbn;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << text;
}

// "given" keeps the column order; otherwise a file of variable names or
// indices separated by whitespace or commas.
std::vector<int> read_order(const std::string& spec, const Dataset& data) {
  std::vector<int> order;
  if (spec == "given") {
    order.resize(data.vars());
    std::iota(order.begin(), order.end(), 0);
    return order;
  }
  std::string text = read_text(spec);
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    int idx = -1;
    for (std::size_t j = 0; j < data.vars(); ++j)
      if (data.domain(j).name == tok) idx = static_cast<int>(j);
    if (idx < 0) {
      try {
        std::size_t used = 0;
        idx = std::stoi(tok, &used);
        if (used != tok.size()) idx = -1;
      } catch (const std::exception&) {
        idx = -1;
      }
    }
    if (idx < 0 || static_cast<std::size_t>(idx) >= data.vars())
      throw InputError("order: unknown variable '" + tok + "'");
    order.push_back(idx);
  }
  std::vector<int> check = order;
  std::sort(check.begin(), check.end());
  if (check.size() != data.vars() || std::adjacent_find(check.begin(), check.end()) != check.end())
    throw InputError("order must name every variable exactly once");
  return order;
}

std::string pattern_text(const FeaturePattern& pat) {
  std::string s = std::to_string(pat.child) + "=" + (pat.child_value ? std::to_string(*pat.child_value) : "*");
  for (std::size_t k = 0; k < pat.parents.size(); ++k)
    s += "\t" + std::to_string(pat.parents[k]) + ":" + std::to_string(pat.parent_values[k]);
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string dag_text(const BayesNet& net) {
  std::string s;
  for (auto [p, c] : extract_dag(net))
    s += net.domains()[p].name + " -> " + net.domains()[c].name + "\n";
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convex-relaxation Bayesian network structure learning"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  double beta = 1.0;
  std::string out_path = "-";
  std::string data_path, model_path, order_spec = "given";

  // synth
  SyntheticSpec synth;
  auto* c_synth = app.add_subcommand("synth", "Random network with Dirichlet tables");
  c_synth->add_option("--n", synth.n, "Variables")->check(CLI::PositiveNumber);
  c_synth->add_option("--edges", synth.edges, "Edge count");
  c_synth->add_option("--cardinality", synth.cardinality, "Values per variable");
  c_synth->add_option("--concentration", synth.concentration, "Symmetric Dirichlet parameter");
  c_synth->add_option("--seed", seed);
  c_synth->add_option("--out", out_path, "Model file")->required();

  // sample
  std::size_t count = 100;
  auto* c_sample = app.add_subcommand("sample", "Ancestral sampling from a model");
  c_sample->add_option("--model", model_path)->required();
  c_sample->add_option("--count", count);
  c_sample->add_option("--seed", seed);
  c_sample->add_option("--out", out_path, "CSV file");

  // gen-features
  auto* c_gen = app.add_subcommand("gen-features", "Generate features per child");
  c_gen->add_option("--data", data_path)->required();
  c_gen->add_option("--order", order_spec, "Order file, 'given', or 'none' for all other variables");
  c_gen->add_option("--out", out_path);

  // learn
  std::string trace_path, rounding = "fixed";
  auto* c_learn = app.add_subcommand("learn", "Convex MDL learning under a fixed order");
  c_learn->add_option("--data", data_path)->required();
  c_learn->add_option("--order", order_spec, "Order file or 'given'");
  c_learn->add_option("--beta", beta)->check(CLI::PositiveNumber);
  c_learn->add_option("--out", out_path, "Model file")->required();
  c_learn->add_option("--trace", trace_path, "Iteration trace file ('-' for stdout)");
  c_learn->add_option("--rounding", rounding, "fixed: soft weights held; reoptimized: refit per decision")
      ->check(CLI::IsMember({"fixed", "reoptimized"}));
  c_learn->add_option("--seed", seed, "Unused; accepted for uniformity");

  // learn-order
  std::string soft_path;
  auto* c_lo = app.add_subcommand("learn-order", "Joint order and structure learning");
  c_lo->add_option("--data", data_path)->required();
  c_lo->add_option("--beta", beta)->check(CLI::PositiveNumber);
  c_lo->add_option("--out", out_path, "Model file")->required();
  c_lo->add_option("--dump-soft", soft_path, "Soft S matrix and eta");
  c_lo->add_option("--rounding", rounding)->check(CLI::IsMember({"fixed", "reoptimized"}));
  c_lo->add_option("--seed", seed, "Unused; accepted for uniformity");

  // baseline
  std::string algo = "k2", score = "bic";
  int max_parents = -1, restarts = 4;
  auto* c_base = app.add_subcommand("baseline", "K2 or hill-climbing with BIC / BDeu");
  c_base->add_option("--algo", algo)->check(CLI::IsMember({"k2", "hillclimb"}));
  c_base->add_option("--score", score)->check(CLI::IsMember({"bic", "bde"}));
  c_base->add_option("--order", order_spec, "Order file or 'given' (K2 only)");
  c_base->add_option("--data", data_path)->required();
  c_base->add_option("--out", out_path, "Model file")->required();
  c_base->add_option("--max-parents", max_parents);
  c_base->add_option("--restarts", restarts);
  c_base->add_option("--seed", seed);

  // eval
  auto* c_eval = app.add_subcommand("eval", "Mean negative log-likelihood per row (nats)");
  c_eval->add_option("--model", model_path)->required();
  c_eval->add_option("--data", data_path)->required();

  // experiment
  ExperimentSpec exp;
  std::string learners = "convex,k2-bic", edges_list, beta_grid;
  std::vector<std::string> data_files;
  std::size_t n_vars = 5;
  int cardinality = 2;
  auto* c_exp = app.add_subcommand("experiment", "Repeated train/test comparison");
  c_exp->add_option("--learners", learners, "Comma list of learners");
  c_exp->add_option("--synthetic-edges", edges_list, "Comma list of edge counts, one synthetic net each");
  c_exp->add_option("--n", n_vars, "Variables per synthetic net");
  c_exp->add_option("--cardinality", cardinality);
  c_exp->add_option("--data", data_files, "Pre-discretized CSV files");
  c_exp->add_option("--train", exp.train);
  c_exp->add_option("--test", exp.test);
  c_exp->add_option("--repeats", exp.repeats);
  c_exp->add_option("--beta-grid", beta_grid, "Comma list; default 0.01,0.1,1,10");
  c_exp->add_option("--seed", seed);
  c_exp->add_option("--out", out_path, "Results file (timing goes to <out>.runtime.tsv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  const RoundingRule rule =
      rounding == "fixed" ? RoundingRule::FixedWeights : RoundingRule::Reoptimized;
  try {
    if (c_synth->parsed()) {
      synth.seed = seed;
      const auto gen = generate_synthetic(synth);
      save_model_file(gen.net, out_path);
      std::cout << dag_text(gen.net);
    } else if (c_sample->parsed()) {
      const auto net = load_model_file(model_path);
      write_text(out_path, format_csv(sample(net, count, seed)));
    } else if (c_gen->parsed()) {
      const auto data = load_csv(data_path);
      std::vector<int> order;
      if (order_spec != "none") order = read_order(order_spec, data);
      const auto candidates = candidate_sets(data.vars(), order);
      std::string text;
      for (std::size_t j = 0; j < data.vars(); ++j) {
        const auto res = generate_features_detailed(data, static_cast<int>(j), candidates[j]);
        text += "child\t" + data.domain(j).name + "\tfeatures\t" + std::to_string(res.features.size()) +
                "\trank\t" + std::to_string(res.rank) + "\n";
        for (const auto& f : res.features) text += "f\t" + pattern_text(f) + "\n";
      }
      write_text(out_path, text);
    } else if (c_learn->parsed()) {
      const auto data = load_csv(data_path);
      const auto order = read_order(order_spec, data);
      MinimizeGOptions opt;
      std::ostringstream trace;
      opt.on_iteration = [&](const TraceLine& line) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%d\t%.12g\t%.6g\n", line.iteration, line.value,
                      line.projected_gradient_norm);
        trace << buf;
      };
      const auto sol = learn_fixed_order(data, order, beta, opt, rule);
      save_model_file(sol.net, out_path);
      if (!trace_path.empty()) write_text(trace_path, trace.str());
      std::cout << dag_text(sol.net);
    } else if (c_lo->parsed()) {
      const auto data = load_csv(data_path);
      const auto res = learn_order(data, beta, {}, rule);
      save_model_file(res.solution.net, out_path);
      if (!soft_path.empty()) {
        std::ostringstream soft;
        soft.precision(12);
        const auto& S = res.relaxation.S;
        for (Eigen::Index i = 0; i < S.rows(); ++i) {
          soft << "S";
          for (Eigen::Index j = 0; j < S.cols(); ++j) soft << '\t' << S(i, j);
          soft << '\n';
        }
        const auto features = res.relaxation.problem.all_features();
        for (std::size_t f = 0; f < features.size(); ++f)
          soft << "eta\t" << res.relaxation.eta[f] << '\t' << pattern_text(features[f]) << '\n';
        write_text(soft_path, soft.str());
      }
      std::cout << "order";
      for (int v : res.solution.order) std::cout << ' ' << data.domain(v).name;
      std::cout << '\n' << dag_text(res.solution.net);
    } else if (c_base->parsed()) {
      const auto data = load_csv(data_path);
      const ScoreKind kind = score == "bic" ? ScoreKind::Bic : ScoreKind::Bde;
      BayesNet net;
      if (algo == "k2") {
        K2Options opt;
        opt.score = kind;
        opt.max_parents = max_parents;
        net = k2_search(data, read_order(order_spec, data), opt);
      } else {
        HillClimbOptions opt;
        opt.score = kind;
        opt.restarts = restarts;
        opt.seed = seed;
        net = hill_climb(data, opt);
      }
      save_model_file(net, out_path);
      std::cout << dag_text(net);
    } else if (c_eval->parsed()) {
      const auto net = load_model_file(model_path);
      const auto data = conform(load_csv(data_path), net.domains());
      std::printf("%.10f\n", neg_loglik(net, data));
    } else if (c_exp->parsed()) {
      exp.seed = seed;
      exp.learners = split_list(learners);
      if (!beta_grid.empty()) {
        exp.beta_grid.clear();
        for (const auto& b : split_list(beta_grid)) exp.beta_grid.push_back(std::stod(b));
      }
      for (const auto& e : split_list(edges_list)) {
        ExperimentDataset ds;
        SyntheticSpec s;
        s.n = n_vars;
        s.edges = static_cast<std::size_t>(std::stoul(e));
        s.cardinality = cardinality;
        s.seed = derive_seed(seed, 104729, s.edges);
        ds.synthetic = s;
        ds.name = "synth-n" + std::to_string(n_vars) + "-e" + e;
        exp.datasets.push_back(std::move(ds));
      }
      for (const auto& path : data_files) {
        ExperimentDataset ds;
        ds.name = path.substr(path.find_last_of('/') + 1);
        ds.data = load_csv(path);
        exp.datasets.push_back(std::move(ds));
      }
      if (exp.datasets.empty()) throw InputError("experiment: give --synthetic-edges or --data");
      const auto result = run_experiment(exp, [](const std::string& s) { std::cerr << s << '\n'; });
      std::cout << format_table(result);
      if (out_path != "-") {
        write_text(out_path, format_results(result));
        write_text(out_path + ".runtime.tsv", format_runtimes(result));
      }
    }
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  } catch (const CapacityError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

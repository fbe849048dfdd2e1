// Text format:
//
//   cvxbn-model 1
//   var <TAB> name <TAB> value0 <TAB> value1 ...
//   order <TAB> j0 <TAB> j1 ...
//   local <TAB> child <TAB> feature-count
//   f <TAB> weight <TAB> child-value <TAB> parent:value ...
//   end
//
// Weights use shortest round-trip formatting, so load(save(net)) is exact.

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

#include "cvxbn/core_model.hpp"
#include "cvxbn/errors.hpp"

namespace cvxbn {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw InputError("model: cannot parse number '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::string save_model(const BayesNet& net) {
  std::ostringstream out;
  out << "cvxbn-model 1\n";
  for (const auto& d : net.domains()) {
    out << "var\t" << d.name;
    for (const auto& v : d.values) out << '\t' << v;
    out << '\n';
  }
  out << "order";
  for (int j : net.order()) out << '\t' << j;
  out << '\n';
  for (const auto& local : net.locals()) {
    out << "local\t" << local.child << '\t' << local.features.size() << '\n';
    for (std::size_t f = 0; f < local.features.size(); ++f) {
      const auto& pat = local.features[f];
      out << "f\t" << format_double(local.weights[f]) << '\t' << *pat.child_value;
      for (std::size_t k = 0; k < pat.parents.size(); ++k)
        out << '\t' << pat.parents[k] << ':' << pat.parent_values[k];
      out << '\n';
    }
  }
  out << "end\n";
  return out.str();
}

BayesNet load_model(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    auto line = text.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    start = pos + 1;
  }
  if (lines.empty() || lines[0] != "cvxbn-model 1") throw InputError("model: bad header");

  std::vector<VariableDomain> domains;
  std::vector<int> order;
  std::vector<LocalModel> locals;
  bool ended = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto fields = split_tabs(lines[i]);
    const auto tag = fields[0];
    if (tag == "var") {
      if (fields.size() < 3) throw InputError("model: variable needs a name and values");
      VariableDomain d;
      d.name = std::string(fields[1]);
      for (std::size_t k = 2; k < fields.size(); ++k) d.values.emplace_back(fields[k]);
      domains.push_back(std::move(d));
    } else if (tag == "order") {
      for (std::size_t k = 1; k < fields.size(); ++k) order.push_back(parse_number<int>(fields[k]));
    } else if (tag == "local") {
      if (fields.size() != 3) throw InputError("model: malformed local line");
      LocalModel local;
      local.child = parse_number<int>(fields[1]);
      if (local.child < 0 || static_cast<std::size_t>(local.child) >= domains.size())
        throw InputError("model: local child out of range");
      local.cardinality = domains[local.child].cardinality();
      const auto count = parse_number<std::size_t>(fields[2]);
      for (std::size_t f = 0; f < count; ++f) {
        if (++i >= lines.size()) throw InputError("model: truncated feature list");
        auto ff = split_tabs(lines[i]);
        if (ff.size() < 3 || ff[0] != "f") throw InputError("model: malformed feature line");
        FeaturePattern pat;
        pat.child = local.child;
        pat.child_value = parse_number<int>(ff[2]);
        for (std::size_t k = 3; k < ff.size(); ++k) {
          const auto colon = ff[k].find(':');
          if (colon == std::string_view::npos) throw InputError("model: malformed parent term");
          pat.parents.push_back(parse_number<int>(ff[k].substr(0, colon)));
          pat.parent_values.push_back(parse_number<int>(ff[k].substr(colon + 1)));
        }
        local.features.push_back(std::move(pat));
        local.weights.push_back(parse_number<double>(ff[1]));
      }
      locals.push_back(std::move(local));
    } else if (tag == "end") {
      ended = true;
      break;
    } else {
      throw InputError("model: unknown line tag '" + std::string(tag) + "'");
    }
  }
  if (!ended) throw InputError("model: missing end marker");
  std::sort(locals.begin(), locals.end(),
            [](const LocalModel& a, const LocalModel& b) { return a.child < b.child; });
  return BayesNet(std::move(domains), std::move(locals), std::move(order));
}

void save_model_file(const BayesNet& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << save_model(net);
}

BayesNet load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_model(buf.str());
}

}  // namespace cvxbn

#include "hamh/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hamh::nn {

namespace {

constexpr const char* kMagic = "hamh-checkpoint v1";

std::string fmt_f64(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void ParamRegistry::add(const std::string& name, Tensor t) {
  if (contains(name)) throw std::invalid_argument("ParamRegistry: duplicate name '" + name + "'");
  t.set_name(name);
  items_.emplace_back(name, std::move(t));
}

const Tensor& ParamRegistry::get(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  throw std::out_of_range("ParamRegistry: no parameter named '" + name + "'");
}

bool ParamRegistry::contains(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return true;
  return false;
}

std::vector<Tensor> ParamRegistry::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& [n, t] : items_) out.push_back(t);
  return out;
}

std::size_t ParamRegistry::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += static_cast<std::size_t>(t.size());
  return n;
}

void save_checkpoint(std::ostream& os, const ParamRegistry& params, const MetaMap& meta) {
  os << kMagic << "\n";
  for (const auto& [k, v] : meta) os << "meta " << k << ' ' << v << "\n";
  for (const auto& [name, t] : params.items()) {
    os << "param " << name << ' ' << t.rank();
    for (Index d : t.shape()) os << ' ' << d;
    os << "\n";
    const Mat& m = t.value();
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) os << (c ? " " : "") << fmt_f64(m(r, c));
      os << "\n";
    }
  }
  os << "end\n";
}

void save_checkpoint(const std::string& path, const ParamRegistry& params, const MetaMap& meta) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
  save_checkpoint(f, params, meta);
  if (!f) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

namespace {

MetaMap parse_checkpoint(std::istream& is, ParamRegistry* params, bool meta_only) {
  std::string line;
  if (!std::getline(is, line) || line != kMagic)
    throw std::runtime_error("checkpoint: bad or missing header");
  MetaMap meta;
  std::vector<std::string> seen;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "end") break;
    if (tag == "meta") {
      std::string k, v;
      ls >> k;
      std::getline(ls, v);
      if (!v.empty() && v.front() == ' ') v.erase(0, 1);
      meta[k] = v;
      continue;
    }
    if (tag != "param") throw std::runtime_error("checkpoint: unexpected line '" + line + "'");
    if (meta_only) return meta;

    std::string name;
    int rank = 0;
    ls >> name >> rank;
    if (rank != 1 && rank != 2)
      throw std::runtime_error("checkpoint: bad rank for parameter '" + name + "'");
    Index rows = 1, cols = 0;
    if (rank == 1) {
      ls >> cols;
    } else {
      ls >> rows >> cols;
    }
    if (!ls || rows <= 0 || cols <= 0)
      throw std::runtime_error("checkpoint: bad shape for parameter '" + name + "'");
    if (!params->contains(name))
      throw std::runtime_error("checkpoint: unknown parameter '" + name + "'");
    Tensor t = params->get(name);
    if (t.rank() != rank || t.rows() != rows || t.cols() != cols) {
      std::ostringstream os;
      os << "checkpoint: shape mismatch for parameter '" << name << "': file (" << rows << "x"
         << cols << "), model " << t.shape_str();
      throw std::runtime_error(os.str());
    }
    for (Index r = 0; r < rows; ++r) {
      if (!std::getline(is, line))
        throw std::runtime_error("checkpoint: truncated values for parameter '" + name + "'");
      std::istringstream vs(line);
      for (Index c = 0; c < cols; ++c) {
        double v;
        if (!(vs >> v))
          throw std::runtime_error("checkpoint: malformed values for parameter '" + name + "'");
        t.value()(r, c) = v;
      }
    }
    seen.push_back(name);
  }
  if (!meta_only) {
    for (const auto& [name, t] : params->items()) {
      bool found = false;
      for (const auto& s : seen) found = found || s == name;
      if (!found) throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
    }
  }
  return meta;
}

}  // namespace

MetaMap load_checkpoint(std::istream& is, ParamRegistry& params) {
  return parse_checkpoint(is, &params, false);
}

MetaMap load_checkpoint(const std::string& path, ParamRegistry& params) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  return load_checkpoint(f, params);
}

MetaMap peek_checkpoint_meta(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("peek_checkpoint_meta: cannot open '" + path + "'");
  ParamRegistry dummy;
  return parse_checkpoint(f, &dummy, true);
}

}  // namespace hamh::nn

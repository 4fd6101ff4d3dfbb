#include "leaves/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace leaves {

namespace {
constexpr char kMagic[4] = {'L', 'E', 'A', 'V'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::size_t ParamStore::add(std::string name, Shape shape, std::vector<double> value,
                            bool trainable) {
  if (numel(shape) != value.size())
    throw ShapeError("param " + name + ": shape " + shape_str(shape) +
                     " does not match value count");
  params_.push_back(Param{std::move(name), std::move(shape), std::move(value), trainable});
  return params_.size() - 1;
}

std::size_t ParamStore::add(std::string name, Shape shape, double fill, bool trainable) {
  std::size_t n = numel(shape);
  return add(std::move(name), std::move(shape), std::vector<double>(n, fill), trainable);
}

Param& ParamStore::by_name(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw UsageError("no parameter named " + name);
}

const Param& ParamStore::by_name(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw UsageError("no parameter named " + name);
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return true;
  return false;
}

std::size_t ParamStore::total_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::size_t ParamStore::trainable_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable) n += p.value.size();
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& p : params_)
    for (double v : p.value)
      if (!std::isfinite(v)) return false;
  return true;
}

void ParamStore::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 4);
  std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  std::uint64_t count = total_scalars();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& p : params_)
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  if (!out) throw UsageError("checkpoint write failed: " + path);

  std::ofstream manifest(path + ".manifest");
  for (const auto& p : params_) {
    manifest << p.name << ' ' << shape_str(p.shape) << ' '
             << (p.trainable ? "trainable" : "state") << '\n';
  }
}

void ParamStore::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DomainError("bad checkpoint magic in " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kVersion)
    throw DomainError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || count != total_scalars())
    throw DomainError("checkpoint scalar count " + std::to_string(count) + " does not match " +
                      std::to_string(total_scalars()) + " in " + path);
  for (auto& p : params_) {
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!in) throw DomainError("checkpoint truncated: " + path);
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name) return false;
    if (params_[i].shape != other.params_[i].shape) return false;
    if (params_[i].value != other.params_[i].value) return false;
  }
  return true;
}

}  // namespace leaves

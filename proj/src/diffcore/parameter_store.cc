#include "rec4ad/diffcore/parameter_store.h"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "rec4ad/common/error.h"

namespace rec4ad::diffcore {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'R', '4', 'A', 'D', 'P', 'S', 'T', 'O'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void Put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T Take(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("checkpoint truncated");
  return v;
}

void PutMatrix(std::ostream& out, const Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix TakeMatrix(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw FormatError("checkpoint truncated");
  return m;
}

}  // namespace

Parameter& ParameterStore::add(const std::string& name, Matrix init, bool trainable) {
  if (params_.count(name) != 0) throw ConfigError("duplicate parameter name: " + name);
  Parameter p;
  p.first_moment = Matrix::Zero(init.rows(), init.cols());
  p.second_moment = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  p.trainable = trainable;
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

bool ParameterStore::contains(const std::string& name) const {
  return params_.count(name) != 0;
}

void ParameterStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.resize(0, 0);
}

std::size_t ParameterStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::save(std::ostream& out, const std::string& header) const {
  out.write(kMagic, sizeof(kMagic));
  Put<std::uint32_t>(out, kVersion);
  Put<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  Put<std::uint64_t>(out, params_.size());
  for (const auto& [name, p] : params_) {
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    Put<std::uint8_t>(out, p.trainable ? 1 : 0);
    Put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.rows()));
    Put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.cols()));
    PutMatrix(out, p.value);
    PutMatrix(out, p.first_moment);
    PutMatrix(out, p.second_moment);
    Put<std::int64_t>(out, p.step);
  }
  if (!out) throw FormatError("failed writing checkpoint");
}

std::string ParameterStore::load(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a parameter-store checkpoint");
  }
  if (Take<std::uint32_t>(in) != kVersion) throw FormatError("unsupported checkpoint version");
  std::string header(Take<std::uint64_t>(in), '\0');
  in.read(header.data(), static_cast<std::streamsize>(header.size()));
  if (!in) throw FormatError("checkpoint truncated");
  std::map<std::string, Parameter> loaded;
  const auto count = Take<std::uint64_t>(in);
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name(Take<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    Parameter p;
    p.trainable = Take<std::uint8_t>(in) != 0;
    const auto rows = static_cast<Eigen::Index>(Take<std::uint64_t>(in));
    const auto cols = static_cast<Eigen::Index>(Take<std::uint64_t>(in));
    p.value = TakeMatrix(in, rows, cols);
    p.first_moment = TakeMatrix(in, rows, cols);
    p.second_moment = TakeMatrix(in, rows, cols);
    p.step = Take<std::int64_t>(in);
    if (!loaded.emplace(std::move(name), std::move(p)).second) {
      throw FormatError("duplicate parameter in checkpoint");
    }
  }
  params_ = std::move(loaded);
  return header;
}

}  // namespace rec4ad::diffcore

#include "haven/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace haven {

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.tensor;
  }
  return nullptr;
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << "haven-checkpoint 1\n";
  for (const auto& [key, value] : checkpoint.meta) out << "meta " << key << ' ' << value << '\n';
  for (const auto& [name, tensor] : checkpoint.tensors) {
    out << "tensor " << name << ' ' << tensor.rows() << ' ' << tensor.cols() << '\n';
    bool first = true;
    for (double v : tensor.values()) {
      out << (first ? "" : " ") << format_double(v);
      first = false;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("error writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "haven-checkpoint 1") {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  Checkpoint cp;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream head(line);
    std::string kind;
    head >> kind;
    if (kind == "meta") {
      std::string key, value;
      head >> key;
      std::getline(head >> std::ws, value);
      cp.meta[key] = value;
    } else if (kind == "tensor") {
      std::string name;
      std::size_t rows = 0, cols = 0;
      if (!(head >> name >> rows >> cols)) throw std::runtime_error("bad tensor header: " + line);
      std::string body;
      std::getline(in, body);
      std::vector<double> values;
      values.reserve(rows * cols);
      const char* p = body.data();
      const char* end = body.data() + body.size();
      while (p < end) {
        while (p < end && *p == ' ') ++p;
        if (p == end) break;
        double v = 0.0;
        auto [next, ec] = std::from_chars(p, end, v);
        if (ec != std::errc()) throw std::runtime_error("bad value in tensor " + name);
        values.push_back(v);
        p = next;
      }
      if (values.size() != rows * cols) {
        throw std::runtime_error("tensor " + name + ": expected " + std::to_string(rows * cols) +
                                 " values, found " + std::to_string(values.size()));
      }
      cp.tensors.push_back({name, Tensor::matrix(rows, cols, std::move(values))});
    } else {
      throw std::runtime_error("unknown checkpoint record: " + kind);
    }
  }
  return cp;
}

}  // namespace haven

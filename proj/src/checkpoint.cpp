#include "dskt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dskt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::map<std::string, std::string>& meta) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f << "DSKT1\n";
  for (const auto& [k, v] : meta) f << "meta " << k << " " << v << "\n";
  long long offset = 0;
  for (int i = 0; i < params.size(); ++i) {
    const Tensor& t = params.tensor(i);
    f << "tensor " << params.name(i) << " " << t.ndim();
    for (int d : t.shape) f << " " << d;
    f << " " << offset << "\n";
    offset += t.numel() * static_cast<long long>(sizeof(double));
  }
  f << "data\n";
  for (int i = 0; i < params.size(); ++i) {
    const Tensor& t = params.tensor(i);
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!f) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "DSKT1")
    throw ParseError("checkpoint " + path + ": bad magic (line 1)");
  Checkpoint ck;
  struct Entry {
    std::string name;
    std::vector<int> shape;
    long long offset;
  };
  std::vector<Entry> entries;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line == "data") break;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "meta") {
      std::string k;
      ss >> k;
      std::string v;
      std::getline(ss, v);
      if (!v.empty() && v.front() == ' ') v.erase(v.begin());
      ck.meta[k] = v;
    } else if (tag == "tensor") {
      Entry e;
      int nd = 0;
      ss >> e.name >> nd;
      e.shape.resize(nd);
      for (int i = 0; i < nd; ++i) ss >> e.shape[i];
      ss >> e.offset;
      if (!ss) throw ParseError("checkpoint " + path + ": bad tensor line " +
                                std::to_string(lineno));
      entries.push_back(std::move(e));
    } else {
      throw ParseError("checkpoint " + path + ": unknown record at line " +
                       std::to_string(lineno));
    }
  }
  const std::streampos data_start = f.tellg();
  for (const auto& e : entries) {
    Tensor t(e.shape);
    f.seekg(data_start + static_cast<std::streamoff>(e.offset));
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!f) throw ParseError("checkpoint " + path + ": truncated data for " + e.name);
    ck.params.add(e.name, std::move(t));
  }
  return ck;
}

}  // namespace dskt

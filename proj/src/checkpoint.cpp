#include "tiedmt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace tiedmt {

namespace {

constexpr char kMagic[4] = {'T', 'M', 'C', 'K'};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(std::string bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  uint32_t u32() {
    if (pos_ + 4 > bytes_.size()) fail("truncated");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string str(size_t len) {
    if (pos_ + len > bytes_.size()) fail("truncated");
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string& why) {
    throw std::runtime_error("checkpoint " + path_ + ": " + why);
  }

 private:
  std::string bytes_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

void save_payload(const std::string& path, const CheckpointPayload& payload) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, payload.kind);
  for (uint32_t f : payload.fields) put_u32(out, f);
  put_f32(out, payload.extra);
  put_u32(out, static_cast<uint32_t>(payload.tensors.size()));
  for (const auto& [name, tensor] : payload.tensors) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<uint32_t>(tensor.shape().size()));
    for (int e : tensor.shape()) put_u32(out, static_cast<uint32_t>(e));
    for (Real v : tensor.data()) put_f32(out, static_cast<float>(v));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("checkpoint " + path + ": cannot open for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw std::runtime_error("checkpoint " + path + ": write failed");
}

CheckpointPayload load_payload(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("checkpoint " + path + ": cannot open");
  std::string bytes((std::istreambuf_iterator<char>(file)),
                    std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path);
  if (r.str(4) != std::string(kMagic, 4)) r.fail("bad magic");
  if (r.u32() != kCheckpointVersion) r.fail("unsupported version");
  CheckpointPayload payload;
  payload.kind = r.u32();
  for (uint32_t& f : payload.fields) f = r.u32();
  payload.extra = r.f32();
  uint32_t count = r.u32();
  payload.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    uint32_t ndim = r.u32();
    std::vector<int> shape(ndim);
    int64_t total = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      shape[d] = static_cast<int>(r.u32());
      total *= shape[d];
    }
    std::vector<Real> data(static_cast<size_t>(total));
    for (Real& v : data) v = static_cast<Real>(r.f32());
    payload.tensors.emplace_back(name,
                                 Tensor::from(std::move(shape), std::move(data)));
  }
  if (!r.done()) r.fail("trailing bytes");
  return payload;
}

void save_checkpoint(const std::string& path, const Parameters& params) {
  CheckpointPayload payload;
  payload.kind = kKindSeq2seq;
  payload.fields = {static_cast<uint32_t>(params.config.enc_layers),
                    static_cast<uint32_t>(params.config.dec_layers),
                    static_cast<uint32_t>(params.config.d_model),
                    static_cast<uint32_t>(params.config.heads),
                    static_cast<uint32_t>(params.config.d_ff),
                    static_cast<uint32_t>(params.config.vocab),
                    static_cast<uint32_t>(params.config.max_len),
                    params.config.recurrent_stacking ? 1u : 0u};
  payload.extra = static_cast<float>(params.config.dropout);
  payload.tensors = params.named_tensors();
  save_payload(path, payload);
}

Parameters load_checkpoint(const std::string& path) {
  CheckpointPayload payload = load_payload(path);
  if (payload.kind != kKindSeq2seq)
    throw std::runtime_error("checkpoint " + path + ": not a seq2seq checkpoint");
  ModelConfig cfg;
  cfg.enc_layers = static_cast<int>(payload.fields[0]);
  cfg.dec_layers = static_cast<int>(payload.fields[1]);
  cfg.d_model = static_cast<int>(payload.fields[2]);
  cfg.heads = static_cast<int>(payload.fields[3]);
  cfg.d_ff = static_cast<int>(payload.fields[4]);
  cfg.vocab = static_cast<int>(payload.fields[5]);
  cfg.max_len = static_cast<int>(payload.fields[6]);
  cfg.recurrent_stacking = payload.fields[7] != 0;
  cfg.dropout = static_cast<Real>(payload.extra);
  cfg.validate();

  // Build a skeleton with the right layout, then fill from the records.
  Rng rng(1);
  Parameters params = Parameters::init(cfg, rng);
  std::map<std::string, Tensor> by_name;
  for (auto& [name, tensor] : payload.tensors) by_name.emplace(name, tensor);
  for (auto& [name, tensor] : params.named_tensors()) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint " + path + ": missing record " + name);
    if (it->second.shape() != tensor.shape())
      throw std::runtime_error("checkpoint " + path + ": shape mismatch for " + name);
    const_cast<Tensor&>(tensor).data() = it->second.data();
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw std::runtime_error("checkpoint " + path + ": unknown record " +
                             by_name.begin()->first);
  return params;
}

}  // namespace tiedmt

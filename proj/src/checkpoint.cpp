#include "splitface/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "splitface/text.hpp"

namespace splitface {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'P', 'L', 'F'};

enum class DType : std::uint8_t { f32 = 0, f64 = 1, i64 = 2 };

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename V>
  void pod(const V& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(V));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void string(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const nn::Tensor<float>& t) {
    string(name);
    pod(static_cast<std::uint8_t>(DType::f32));
    pod(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) pod(static_cast<std::uint32_t>(d));
    bytes(t.data(), t.size() * sizeof(float));
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  template <typename V>
  V pod() {
    V v;
    take(&v, sizeof(V));
    return v;
  }
  void take(void* dst, std::size_t n) {
    if (n > in_.size() - pos_) throw CorruptCheckpoint("truncated at byte " + std::to_string(pos_));
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  std::string string() {
    const auto n = pod<std::uint32_t>();
    if (n > in_.size() - pos_) throw CorruptCheckpoint("truncated string at byte " + std::to_string(pos_));
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::pair<std::string, nn::Tensor<float>> tensor() {
    std::string name = string();
    const auto dtype = pod<std::uint8_t>();
    if (dtype != static_cast<std::uint8_t>(DType::f32))
      throw CorruptCheckpoint("tensor '" + name + "' has dtype " + std::to_string(dtype) + ", expected f32");
    const auto rank = pod<std::uint32_t>();
    if (rank > 8) throw CorruptCheckpoint("tensor '" + name + "' has implausible rank");
    nn::Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = static_cast<int>(pod<std::uint32_t>());
      count *= static_cast<std::size_t>(d);
    }
    if (count > (in_.size() - pos_) / sizeof(float))
      throw CorruptCheckpoint("tensor '" + name + "' is truncated");
    nn::Tensor<float> t(shape);
    take(t.data(), count * sizeof(float));
    return {std::move(name), std::move(t)};
  }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_moments(Writer& w, const std::map<std::string, nn::Tensor<float>>& m) {
  w.pod(static_cast<std::uint32_t>(m.size()));
  for (const auto& [name, t] : m) w.tensor(name, t);
}

std::map<std::string, nn::Tensor<float>> read_moments(Reader& r) {
  std::map<std::string, nn::Tensor<float>> m;
  const auto n = r.pod<std::uint32_t>();
  for (std::uint32_t k = 0; k < n; ++k) {
    auto [name, t] = r.tensor();
    m.emplace(std::move(name), std::move(t));
  }
  return m;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(SplitFaceModel& model, const nn::AdamState<float>* adam,
                                               const CheckpointMeta& meta) {
  Writer w;
  w.bytes(kMagic, 4);
  w.pod(kCheckpointVersion);
  w.pod(model.width_scale());
  w.pod(static_cast<std::uint32_t>(model.num_attributes()));
  for (const auto& name : model.attribute_names()) w.string(name);
  for (const auto& attrs : model.mask().attributes) {
    w.pod(static_cast<std::uint32_t>(attrs.size()));
    for (int a : attrs) w.pod(static_cast<std::uint32_t>(a));
  }
  w.pod(static_cast<std::uint32_t>(meta.stage));
  w.pod(static_cast<std::uint32_t>(meta.epochs_completed));
  w.pod(meta.seed);

  const auto params = model.parameters();
  const auto buffers = model.buffers();
  w.pod(static_cast<std::uint32_t>(1 + params.size() + buffers.size()));
  w.tensor("priors", nn::Tensor<float>({model.num_attributes()}, model.priors()));
  for (const auto* p : params) w.tensor(p->name, p->value);
  for (const auto* b : buffers) w.tensor(b->name, b->value);

  w.pod(static_cast<std::uint8_t>(adam ? 1 : 0));
  if (adam) {
    w.pod(adam->step);
    w.pod(adam->config.learning_rate);
    w.pod(adam->config.beta1);
    w.pod(adam->config.beta2);
    w.pod(adam->config.epsilon);
    write_moments(w, adam->first_moment);
    write_moments(w, adam->second_moment);
  }
  const std::uint64_t sum = fnv1a(w.buffer());
  w.pod(sum);
  return std::move(w.buffer());
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 4 + 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CorruptCheckpoint("bad magic");
  Reader r(bytes);
  r.pod<std::uint32_t>();  // magic
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CorruptCheckpoint("version " + std::to_string(version) + ", expected " +
                            std::to_string(kCheckpointVersion));
  std::uint64_t stored_sum;
  std::memcpy(&stored_sum, bytes.data() + bytes.size() - 8, 8);
  if (stored_sum != fnv1a(bytes.first(bytes.size() - 8))) throw CorruptCheckpoint("checksum mismatch");

  ModelConfig cfg;
  cfg.width_scale = r.pod<double>();
  if (!(cfg.width_scale > 0.0) || cfg.width_scale > 64.0) throw CorruptCheckpoint("implausible width scale");
  cfg.num_attributes = static_cast<int>(r.pod<std::uint32_t>());
  if (cfg.num_attributes < 1 || static_cast<std::size_t>(cfg.num_attributes) > bytes.size())
    throw CorruptCheckpoint("implausible attribute count");
  for (int j = 0; j < cfg.num_attributes; ++j) cfg.attribute_names.push_back(r.string());
  AttributeMask mask;
  for (auto& attrs : mask.attributes) {
    const auto n = r.pod<std::uint32_t>();
    if (n > static_cast<std::uint32_t>(cfg.num_attributes)) throw CorruptCheckpoint("mask larger than K");
    for (std::uint32_t k = 0; k < n; ++k) {
      const auto a = r.pod<std::uint32_t>();
      if (a >= static_cast<std::uint32_t>(cfg.num_attributes) || (!attrs.empty() && static_cast<int>(a) <= attrs.back()))
        throw CorruptCheckpoint("mask entries must be sorted attribute indices");
      attrs.push_back(static_cast<int>(a));
    }
  }
  Checkpoint ck;
  ck.meta.stage = static_cast<int>(r.pod<std::uint32_t>());
  ck.meta.epochs_completed = static_cast<int>(r.pod<std::uint32_t>());
  ck.meta.seed = r.pod<std::uint64_t>();
  cfg.seed = ck.meta.seed;

  ck.model = std::make_unique<SplitFaceModel>(cfg);
  ck.model->reshape_heads(mask);

  std::map<std::string, nn::Tensor<float>*> slots;
  nn::Tensor<float> priors({cfg.num_attributes});
  slots["priors"] = &priors;
  for (auto* p : ck.model->parameters()) slots[p->name] = &p->value;
  for (auto* b : ck.model->buffers()) slots[b->name] = &b->value;
  const auto count = r.pod<std::uint32_t>();
  if (count != slots.size())
    throw CorruptCheckpoint(std::to_string(count) + " tensors, model has " + std::to_string(slots.size()));
  for (std::uint32_t k = 0; k < count; ++k) {
    auto [name, t] = r.tensor();
    const auto it = slots.find(name);
    if (it == slots.end()) throw CorruptCheckpoint("unknown tensor '" + name + "'");
    if (it->second->shape() != t.shape())
      throw CorruptCheckpoint("tensor '" + name + "' has shape " + nn::shape_string(t.shape()) + ", expected " +
                              nn::shape_string(it->second->shape()));
    *it->second = std::move(t);
    slots.erase(it);
  }
  ck.model->priors().assign(priors.storage().begin(), priors.storage().end());

  const auto has_adam = r.pod<std::uint8_t>();
  if (has_adam > 1) throw CorruptCheckpoint("bad optimizer flag");
  if (has_adam) {
    nn::AdamState<float> adam;
    adam.step = r.pod<std::int64_t>();
    adam.config.learning_rate = r.pod<double>();
    adam.config.beta1 = r.pod<double>();
    adam.config.beta2 = r.pod<double>();
    adam.config.epsilon = r.pod<double>();
    adam.first_moment = read_moments(r);
    adam.second_moment = read_moments(r);
    ck.adam = std::move(adam);
  }
  if (r.position() != bytes.size() - 8) throw CorruptCheckpoint("trailing bytes after payload");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, SplitFaceModel& model, const nn::AdamState<float>* adam,
                     const CheckpointMeta& meta) {
  const auto bytes = serialize_checkpoint(model, adam, meta);
  text::write_file(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInput("checkpoint " + path.string() + " not found");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace splitface

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dcond/decoder.hpp"
#include "dcond/error.hpp"

namespace dcond {
namespace {

constexpr char kMagic[4] = {'D', 'C', 'N', 'D'};
constexpr std::uint16_t kFormatVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint16_t u16() {
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(u8()) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw ParseError("checkpoint: truncated at byte " + std::to_string(pos_));
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const DecoderModel& model) {
  Writer w;
  w.raw(kMagic, 4);
  w.u16(kFormatVersion);
  w.u16(0);
  const auto& c = model.config();
  for (int v : {c.input_dim, c.proj_dim, c.hidden_dim, c.num_layers, c.num_subclasses, c.patch.window, c.patch.stride}) {
    w.i32(v);
  }
  const auto& table = model.table();
  w.u8(static_cast<std::uint8_t>(table.scheme()));
  w.i32(table.k());
  if (table.scheme() == SubclassScheme::TriphoneTopK) {
    w.u32(static_cast<std::uint32_t>(table.ranked_contexts().size()));
    for (const auto& t : table.ranked_contexts()) {
      w.u8(t.prev.index());
      w.u8(t.cur.index());
      w.u8(t.next.index());
    }
  } else if (table.scheme() == SubclassScheme::TriphoneGrouped) {
    w.str(table.groups().to_csv());
  }
  const auto& slots = model.layout().slots();
  w.u32(static_cast<std::uint32_t>(slots.size()));
  for (const auto& s : slots) {
    w.str(s.name);
    w.i32(s.rows);
    w.i32(s.cols);
    for (std::size_t i = 0; i < s.size(); ++i) w.f32(model.values()[s.offset + i]);
  }
  return w.take();
}

DecoderModel deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (std::memcmp(r.raw(4).data(), kMagic, 4) != 0) throw ParseError("checkpoint: bad magic (expected DCND)");
  const auto version = r.u16();
  if (version != kFormatVersion) throw ParseError("checkpoint: unsupported format version " + std::to_string(version));
  r.u16();
  ModelConfig c;
  c.input_dim = r.i32();
  c.proj_dim = r.i32();
  c.hidden_dim = r.i32();
  c.num_layers = r.i32();
  c.num_subclasses = r.i32();
  c.patch.window = r.i32();
  c.patch.stride = r.i32();

  const auto scheme_code = r.u8();
  const int k = r.i32();
  SubclassTable table = SubclassTable::diphone();
  switch (static_cast<SubclassScheme>(scheme_code)) {
    case SubclassScheme::Monophone:
      table = SubclassTable::monophone();
      break;
    case SubclassScheme::Diphone:
      break;
    case SubclassScheme::TriphoneTopK: {
      const auto n = r.u32();
      std::vector<Triphone> ranked;
      ranked.reserve(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        const int a = r.u8(), b = r.u8(), d = r.u8();
        if (a >= kNumPhonemes || b >= kNumPhonemes || d >= kNumPhonemes) {
          throw ParseError("checkpoint: phoneme index out of range in context table");
        }
        ranked.push_back({Phoneme(a), Phoneme(b), Phoneme(d)});
      }
      table = SubclassTable::from_ranked_contexts(k, std::move(ranked));
      break;
    }
    case SubclassScheme::TriphoneGrouped:
      table = SubclassTable::triphone_grouped(ArticulatoryGroups::from_csv(r.str()));
      break;
    default:
      throw ParseError("checkpoint: unknown subclass scheme code " + std::to_string(scheme_code));
  }

  auto model = DecoderModel::zeros(c, std::move(table));
  const auto& slots = model.layout().slots();
  const auto count = r.u32();
  if (count != slots.size()) throw ParseError("checkpoint: tensor count does not match the config");
  for (const auto& s : slots) {
    const std::string name = r.str();
    const int rows = r.i32();
    const int cols = r.i32();
    if (name != s.name || rows != s.rows || cols != s.cols) {
      throw ParseError("checkpoint: unexpected tensor " + name + " (expected " + s.name + ")");
    }
    for (std::size_t i = 0; i < s.size(); ++i) model.values()[s.offset + i] = r.f32();
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes");
  return model;
}

void save_checkpoint(const DecoderModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const std::string bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

DecoderModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize_checkpoint(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::ostringstream out;
  out << "epoch,alpha,L,Lc,Ls,val_per\n" << std::setprecision(10);
  for (const auto& h : history) {
    out << h.epoch << ',' << h.alpha << ',' << h.loss << ',' << h.mono_loss << ',' << h.subclass_loss << ','
        << h.val_per << '\n';
  }
  return out.str();
}

}  // namespace dcond

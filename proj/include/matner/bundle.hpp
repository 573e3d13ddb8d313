#pragma once
// Single-file model bundle: a UTF-8 header (format version, config, tag
// order, vocabulary), a "WEIGHTS <count>" sentinel, the weight tensors as
// little-endian IEEE-754 binary64 in the fixed tensor order, and a trailing
// CRC-32 over everything before it. Round-trips are bit-exact.
//
// Layout:
//   matner-bundle v1\n
//   key = value\n ... (config + seed)
//   tags = B-material,I-material,B-process,I-process,O\n
//   vocab = <N>\n          number of non-reserved words
//   <word>\n x N           ids 2..N+1 in order; PAD=0 and UNK=1 are implicit
//   WEIGHTS <count>\n
//   <count * 8 bytes>      doubles, little-endian
//   <4 bytes>              CRC-32 (IEEE 802.3), little-endian

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "matner/common.hpp"
#include "matner/corpus.hpp"
#include "matner/model.hpp"

namespace matner {

namespace detail {

inline uint32_t crc32_ieee(const unsigned char* data, size_t len, uint32_t crc = 0) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return ~crc;
}

inline void append_f64_le(std::string& out, double v) {
  uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

inline double read_f64_le(const unsigned char* p) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace detail

inline constexpr const char* kBundleMagic = "matner-bundle v1";

template <typename T = double>
struct ModelBundle {
  ModelConfig config;
  ModelParams<T> params;
  Vocabulary vocab;
};

template <typename T>
std::string serialize_bundle(const ModelBundle<T>& bundle) {
  const ModelConfig& cfg = bundle.config;
  std::ostringstream header;
  header << kBundleMagic << "\n";
  header << "max_len = " << cfg.max_len << "\n";
  header << "embedding_dim = " << cfg.effective_embedding_dim() << "\n";
  header << "lstm_units = " << cfg.lstm_units << "\n";
  header << "spatial_dropout = " << cfg.spatial_dropout << "\n";
  header << "recurrent_dropout = " << cfg.recurrent_dropout << "\n";
  header << "num_words = " << cfg.num_words << "\n";
  header << "num_tags = " << cfg.num_tags << "\n";
  header << "seed = " << cfg.seed << "\n";
  header << "tags = ";
  for (int i = 0; i < TagSet::kNumTags; ++i) header << (i ? "," : "") << TagSet::name_of(i);
  header << "\n";
  const auto words = bundle.vocab.non_reserved_words();
  header << "vocab = " << words.size() << "\n";
  for (const auto& w : words) header << w << "\n";

  const auto tensors = bundle.params.tensors();
  size_t count = 0;
  for (const Mat<T>* t : tensors) count += t->size();
  header << "WEIGHTS " << count << "\n";

  std::string out = header.str();
  out.reserve(out.size() + count * 8 + 4);
  for (const Mat<T>* t : tensors)
    for (T v : t->data) detail::append_f64_le(out, static_cast<double>(v));
  const uint32_t crc =
      detail::crc32_ieee(reinterpret_cast<const unsigned char*>(out.data()), out.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((crc >> (8 * i)) & 0xffu));
  return out;
}

template <typename T>
void save_model(const ModelBundle<T>& bundle, const std::string& path) {
  const std::string bytes = serialize_bundle(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_model: cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("save_model: write failed for '" + path + "'");
}

template <typename T = double>
ModelBundle<T> deserialize_bundle(const std::string& bytes) {
  // Magic line first so a wrong/old format reports as a version problem.
  const size_t first_nl = bytes.find('\n');
  const std::string magic = first_nl == std::string::npos ? bytes : bytes.substr(0, first_nl);
  if (magic != kBundleMagic)
    throw BundleVersionError("bundle version mismatch: found '" + magic + "', expected '" +
                             kBundleMagic + "'");

  // Scan header lines up to the WEIGHTS sentinel.
  size_t pos = first_nl + 1;
  std::vector<std::pair<std::string, std::string>> kv;
  std::vector<std::string> words;
  int64_t vocab_remaining = -1;
  size_t weight_count = 0;
  size_t payload_start = 0;
  bool found_weights = false;
  while (pos < bytes.size()) {
    const size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) break;
    const std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    if (vocab_remaining > 0) {
      words.push_back(line);
      --vocab_remaining;
      continue;
    }
    if (line.rfind("WEIGHTS ", 0) == 0) {
      weight_count = static_cast<size_t>(std::stoull(line.substr(8)));
      payload_start = pos;
      found_weights = true;
      break;
    }
    const size_t eq = line.find(" = ");
    if (eq == std::string::npos)
      throw BundleFormatError("bundle header: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "vocab")
      vocab_remaining = std::stoll(value);
    else
      kv.emplace_back(key, value);
  }
  if (!found_weights || vocab_remaining > 0)
    throw BundleTruncatedError("bundle truncated inside the header");

  const size_t expected = payload_start + weight_count * 8 + 4;
  if (bytes.size() < expected)
    throw BundleTruncatedError("bundle truncated: have " + std::to_string(bytes.size()) +
                               " bytes, need " + std::to_string(expected));
  if (bytes.size() > expected)
    throw BundleFormatError("bundle has " + std::to_string(bytes.size() - expected) +
                            " trailing bytes");

  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<uint32_t>(raw[expected - 4 + i]) << (8 * i);
  const uint32_t computed = detail::crc32_ieee(raw, expected - 4);
  if (stored != computed) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "stored %08x, computed %08x", stored, computed);
    throw BundleChecksumError(std::string("bundle checksum failure: ") + buf);
  }

  ModelBundle<T> bundle;
  ModelConfig& cfg = bundle.config;
  for (const auto& [key, value] : kv) {
    if (key == "max_len") cfg.max_len = std::stoi(value);
    else if (key == "embedding_dim") cfg.embedding_dim = std::stoi(value);
    else if (key == "lstm_units") cfg.lstm_units = std::stoi(value);
    else if (key == "spatial_dropout") cfg.spatial_dropout = std::stod(value);
    else if (key == "recurrent_dropout") cfg.recurrent_dropout = std::stod(value);
    else if (key == "num_words") cfg.num_words = std::stoi(value);
    else if (key == "num_tags") cfg.num_tags = std::stoi(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "tags") {
      std::string expected_tags;
      for (int i = 0; i < TagSet::kNumTags; ++i)
        expected_tags += std::string(i ? "," : "") + TagSet::name_of(i);
      if (value != expected_tags)
        throw BundleFormatError("bundle tag set '" + value + "' does not match '" + expected_tags +
                                "'");
    } else {
      throw BundleFormatError("bundle header: unknown key '" + key + "'");
    }
  }
  bundle.vocab = Vocabulary::from_words(words);
  if (bundle.vocab.size() != cfg.num_words)
    throw BundleFormatError("bundle vocabulary holds " + std::to_string(bundle.vocab.size()) +
                            " words but num_words = " + std::to_string(cfg.num_words));
  cfg.validate();

  bundle.params = ModelParams<T>::zeros(cfg);
  size_t have = 0;
  for (Mat<T>* t : bundle.params.tensors()) have += t->size();
  if (have != weight_count)
    throw BundleFormatError("bundle declares " + std::to_string(weight_count) +
                            " weights but the config needs " + std::to_string(have));

  const unsigned char* p = raw + payload_start;
  for (Mat<T>* t : bundle.params.tensors())
    for (T& v : t->data) {
      v = static_cast<T>(detail::read_f64_le(p));
      p += 8;
    }
  return bundle;
}

template <typename T = double>
ModelBundle<T> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_bundle<T>(buf.str());
}

}  // namespace matner

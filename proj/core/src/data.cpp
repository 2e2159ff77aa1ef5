#include "capfuse/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace capfuse {

const Matrix* FeatureBundle::find(std::string_view name) const {
  for (const auto& [n, m] : modalities) {
    if (n == name) return &m;
  }
  return nullptr;
}

namespace {

const std::array<std::string, Vocab::kNumReserved> kReservedTokens = {"<pad>", "<bos>", "<eos>",
                                                                      "<unk>"};

bool is_cjk(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) ||    // CJK unified ideographs
         (cp >= 0x3400 && cp <= 0x4DBF) ||    // extension A
         (cp >= 0x3040 && cp <= 0x30FF) ||    // kana
         (cp >= 0xF900 && cp <= 0xFAFF);      // compatibility ideographs
}

// Decodes one UTF-8 codepoint starting at `i`; returns its byte length.
// Malformed bytes are treated as single-byte codepoints.
int decode_utf8(std::string_view s, std::size_t i, char32_t& cp) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  }
  int len = 0;
  if ((b0 & 0xE0) == 0xC0) len = 2;
  else if ((b0 & 0xF0) == 0xE0) len = 3;
  else if ((b0 & 0xF8) == 0xF0) len = 4;
  if (len == 0 || i + len > s.size()) {
    cp = b0;
    return 1;
  }
  char32_t v = b0 & (0xFF >> (len + 1));
  for (int k = 1; k < len; ++k) {
    const auto bk = static_cast<unsigned char>(s[i + k]);
    if ((bk & 0xC0) != 0x80) {
      cp = b0;
      return 1;
    }
    v = (v << 6) | (bk & 0x3F);
  }
  cp = v;
  return len;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, int max_len) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&]() {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  std::size_t i = 0;
  while (i < text.size() && static_cast<int>(tokens.size()) < max_len + 1) {
    char32_t cp = 0;
    const int len = decode_utf8(text, i, cp);
    if (cp < 0x80 && std::isspace(static_cast<int>(cp))) {
      flush();
    } else if (is_cjk(cp)) {
      flush();
      tokens.emplace_back(text.substr(i, len));
    } else if (cp < 0x80) {
      current.push_back(static_cast<char>(std::tolower(static_cast<int>(cp))));
    } else {
      current.append(text.substr(i, len));
    }
    i += len;
  }
  flush();
  if (static_cast<int>(tokens.size()) > max_len) tokens.resize(max_len);
  return tokens;
}

Vocab::Vocab() {
  for (const auto& t : kReservedTokens) {
    token_to_id_.emplace(t, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(t);
  }
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (const auto& t : tokens) {
    if (v.token_to_id_.count(t) > 0) throw DataError("vocab: duplicate token '" + t + "'");
    v.token_to_id_.emplace(t, static_cast<int>(v.id_to_token_.size()));
    v.id_to_token_.push_back(t);
  }
  return v;
}

int Vocab::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw DataError("vocab: id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens, bool append_eos) const {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  for (const auto& t : tokens) ids.push_back(id(t));
  if (append_eos) ids.push_back(kEos);
  return ids;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> tokens;
  for (const int i : ids) {
    if (i >= kNumReserved) tokens.push_back(token(i));
  }
  return tokens;
}

std::string Vocab::to_text() const {
  std::string out;
  for (std::size_t i = kNumReserved; i < id_to_token_.size(); ++i) {
    out += id_to_token_[i];
    out += '\n';
  }
  return out;
}

Vocab Vocab::from_text(const std::string& text) {
  std::vector<std::string> tokens;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) {
    if (!line.empty()) tokens.push_back(line);
  }
  return from_tokens(tokens);
}

std::uint32_t Vocab::content_hash() const {
  const std::string t = to_text();
  return crc32(t.data(), t.size());
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, int min_count) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& sent : corpus) {
    for (const auto& tok : sent) counts[tok] += 1;
  }
  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> ordered;
  ordered.reserve(kept.size());
  for (auto& [tok, n] : kept) ordered.push_back(tok);
  return Vocab::from_tokens(ordered);
}

FeatureBundle align_frames(const FeatureBundle& bundle, int n_frames) {
  if (n_frames < 1) throw DataError("align_frames: n_frames must be >= 1");
  FeatureBundle out;
  out.video_id = bundle.video_id;
  out.modalities.reserve(bundle.modalities.size());
  for (const auto& [name, m] : bundle.modalities) {
    if (m.rows < 1) {
      throw DataError("align_frames: modality '" + name + "' of video '" + bundle.video_id +
                      "' has no rows");
    }
    Matrix r(n_frames, m.cols);
    for (int j = 0; j < n_frames; ++j) {
      // round(j * (N-1) / (n_frames-1)); a single requested frame picks row 0.
      const int denom = std::max(1, n_frames - 1);
      const int src = static_cast<int>(
          std::llround(static_cast<double>(j) * (m.rows - 1) / static_cast<double>(denom)));
      for (int c = 0; c < m.cols; ++c) r.at(j, c) = m.at(src, c);
    }
    out.modalities.emplace_back(name, std::move(r));
  }
  return out;
}

void write_captions_jsonl(const std::vector<RawCaptions>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["video_id"] = r.video_id;
    j["captions"] = r.captions;
    out << j.dump() << "\n";
  }
}

std::vector<RawCaptions> read_captions_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open captions file '" + path + "'");
  std::vector<RawCaptions> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("captions file '" + path + "' line " + std::to_string(lineno) + ": " +
                      e.what());
    }
    RawCaptions r;
    if (!j.contains("video_id") || !j.contains("captions")) {
      throw DataError("captions file '" + path + "' line " + std::to_string(lineno) +
                      ": missing video_id/captions");
    }
    r.video_id = j["video_id"].get<std::string>();
    r.captions = j["captions"].get<std::vector<std::string>>();
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<CaptionRecord> encode_captions(const std::vector<RawCaptions>& raw, const Vocab& vocab,
                                           int max_len) {
  std::vector<CaptionRecord> out;
  out.reserve(raw.size());
  for (const auto& r : raw) {
    CaptionRecord rec;
    rec.video_id = r.video_id;
    for (const auto& c : r.captions) {
      rec.references.push_back(vocab.encode(tokenize(c, max_len), /*append_eos=*/true));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::uint32_t crc32(const void* data, std::size_t size, std::uint32_t seed) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  for (std::size_t i = 0; i < size; ++i) c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

}  // namespace capfuse

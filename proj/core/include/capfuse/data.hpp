#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "capfuse/errors.hpp"

namespace capfuse {

/// Plain row-major f32 matrix for non-differentiable data (feature streams).
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {}

  float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  bool operator==(const Matrix&) const = default;
};

/// One video's named per-frame feature streams, in a fixed modality order.
struct FeatureBundle {
  std::string video_id;
  std::vector<std::pair<std::string, Matrix>> modalities;

  const Matrix* find(std::string_view name) const;
};

/// A video id with its tokenized reference captions; every reference ends with
/// the end-of-sequence id.
struct CaptionRecord {
  std::string video_id;
  std::vector<std::vector<int>> references;
};

/// Token <-> id mapping with fixed reserved ids.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  Vocab();
  /// Builds from the non-reserved tokens, in order (token i gets id i+4).
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id(std::string_view token) const;  // kUnk when unknown
  const std::string& token(int id) const;

  std::vector<int> encode(const std::vector<std::string>& tokens, bool append_eos = true) const;
  /// Tokens for non-reserved ids; reserved ids are skipped.
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  /// One non-reserved token per line; line number == id - 4.
  std::string to_text() const;
  static Vocab from_text(const std::string& text);

  /// CRC32 of to_text(); recorded in checkpoints to flag vocab mismatches.
  std::uint32_t content_hash() const;

  bool operator==(const Vocab& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

/// Lowercases, splits on whitespace runs and truncates to max_len tokens.
/// CJK codepoints are emitted as single-character tokens so Chinese text
/// tokenizes without an external segmenter.
std::vector<std::string> tokenize(std::string_view text, int max_len = 30);

/// Tokens with corpus frequency >= min_count, ordered by (frequency desc,
/// token asc), assigned ids from 4 upward.
Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, int min_count = 5);

/// Resamples every modality to exactly n_frames rows by uniform index
/// sampling; a single-row modality is duplicated.
FeatureBundle align_frames(const FeatureBundle& bundle, int n_frames = 32);

/// Caption text storage: JSON-lines {"video_id": str, "captions": [str, ...]}.
struct RawCaptions {
  std::string video_id;
  std::vector<std::string> captions;
};
void write_captions_jsonl(const std::vector<RawCaptions>& records, const std::string& path);
std::vector<RawCaptions> read_captions_jsonl(const std::string& path);

/// Tokenize + encode raw captions against a vocab (adds the trailing eos).
std::vector<CaptionRecord> encode_captions(const std::vector<RawCaptions>& raw, const Vocab& vocab,
                                           int max_len = 30);

/// CRC-32 (IEEE 802.3) over a byte range; used for vocab hashes and
/// checkpoint integrity.
std::uint32_t crc32(const void* data, std::size_t size, std::uint32_t seed = 0);

}  // namespace capfuse

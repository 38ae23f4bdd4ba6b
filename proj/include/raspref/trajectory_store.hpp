#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "raspref/domain.hpp"
#include "raspref/embed_index.hpp"
#include "raspref/errors.hpp"

// Append-only memory of trajectories, persisted as JSONL (one trajectory per
// line, UTF-8, '\n' endings) with an in-memory cosine index over the records
// that carry embeddings. Single writer, concurrent readers: retrieval is
// const and appends must be serialized by the caller.

namespace raspref {

class TrajectoryStore {
 public:
  // Opens or creates the backing file. Loads every well-formed line; a
  // truncated final line (interrupted write) is skipped with a warning and
  // trimmed from the file so later appends stay line-aligned. Any earlier
  // malformed line is a hard ParseError.
  explicit TrajectoryStore(std::filesystem::path path) : path_(std::move(path)) {
    const auto keep_bytes = load();
    if (keep_bytes) {
      std::error_code ec;
      std::filesystem::resize_file(path_, *keep_bytes, ec);
      if (ec) throw StorageFailure("cannot trim truncated tail of " + path_.string());
    }
    writer_.open(path_, std::ios::app | std::ios::binary);
    if (!writer_) throw StorageFailure("cannot open store for writing: " + path_.string());
  }

  // Persists the record durably before updating in-memory state. A rejected
  // append leaves both the file view and the index unchanged.
  void append(const Trajectory& t) {
    t.validate();
    if (t.embedding) {
      if (dim_ && t.embedding->size() != *dim_) {
        throw DimensionMismatch("append: embedding dim " + std::to_string(t.embedding->size()) +
                                " vs store dim " + std::to_string(*dim_));
      }
    }
    const std::string line = nlohmann::json(t).dump();
    writer_ << line << '\n';
    writer_.flush();
    if (!writer_) throw StorageFailure("write failed: " + path_.string());
    ingest(t);
  }

  // Top-k trajectories by cosine similarity to the query; empty store (or no
  // embedded records) yields an empty list. min_verifier, when set, drops
  // records whose verifier score is missing or below the threshold before
  // ranking.
  std::vector<Trajectory> retrieve(const EmbeddingVector& query, std::size_t k,
                                   std::optional<double> min_verifier = std::nullopt) const {
    if (k == 0 || index_.empty()) return {};
    std::vector<SearchHit> hits;
    if (min_verifier) {
      std::vector<IndexEntry> filtered;
      for (std::size_t i = 0; i < index_.size(); ++i) {
        const auto& record = records_[index_record_[i]];
        if (record.verifier && *record.verifier >= *min_verifier) {
          filtered.push_back(index_[i]);
        }
      }
      if (filtered.empty()) return {};
      hits = top_k(filtered, query, k);
    } else {
      hits = top_k(index_, query, k);
    }
    std::vector<Trajectory> out;
    out.reserve(hits.size());
    for (const auto& hit : hits) {
      out.push_back(records_[static_cast<std::size_t>(std::stoull(hit.key))]);
    }
    return out;
  }

  std::size_t size() const { return records_.size(); }
  std::size_t indexed_count() const { return index_.size(); }
  const Trajectory& record(std::size_t i) const { return records_.at(i); }
  const std::vector<Trajectory>& records() const { return records_; }
  std::optional<std::size_t> embedding_dim() const { return dim_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  void ingest(const Trajectory& t) {
    const std::size_t ordinal = records_.size();
    records_.push_back(t);
    if (t.embedding) {
      index_.push_back({std::to_string(ordinal), EmbeddingVector(*t.embedding),
                        static_cast<std::uint64_t>(index_.size())});
      index_record_.push_back(ordinal);
      dim_ = t.embedding->size();
    }
  }

  // Returns the byte count the file should be trimmed to, when recovery from
  // a torn final write is needed.
  std::optional<std::size_t> load() {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return std::nullopt;  // fresh store
    const std::string contents((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    std::size_t lineno = 0;
    std::size_t keep = 0;  // end of the last intact, newline-terminated region
    while (pos < contents.size()) {
      const auto newline = contents.find('\n', pos);
      const bool terminated = newline != std::string::npos;
      const std::size_t end = terminated ? newline : contents.size();
      const std::string_view line(contents.data() + pos, end - pos);
      const std::size_t next = terminated ? newline + 1 : contents.size();
      ++lineno;
      const bool blank = line.find_first_not_of(" \t\r") == std::string_view::npos;
      if (!blank) {
        try {
          Trajectory t = nlohmann::json::parse(line).get<Trajectory>();
          if (t.embedding && dim_ && t.embedding->size() != *dim_) {
            throw DimensionMismatch("inconsistent embedding dimension");
          }
          if (!terminated) throw StorageFailure("final record lacks a newline");
          ingest(t);
        } catch (const std::exception& e) {
          if (next == contents.size()) {
            std::cerr << "raspref: skipping truncated final line " << lineno << " of "
                      << path_.string() << ": " << e.what() << '\n';
            return keep;
          }
          throw ParseError("store " + path_.string() + " line " + std::to_string(lineno) + ": " +
                           e.what());
        }
      }
      keep = next;
      pos = next;
    }
    return std::nullopt;  // everything intact
  }

  std::filesystem::path path_;
  std::vector<Trajectory> records_;
  std::vector<IndexEntry> index_;
  std::vector<std::size_t> index_record_;  // index entry -> record ordinal
  std::optional<std::size_t> dim_;
  std::ofstream writer_;
};

}  // namespace raspref

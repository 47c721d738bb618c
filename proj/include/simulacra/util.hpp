#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace simulacra {

/// 64-bit FNV-1a. Stable across platforms, used for seed derivation and feature hashing.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// Sub-seed for one (student, lecture) unit. Independent of processing order.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view student_id,
                          std::string_view lecture_id) noexcept;

std::string sha256_hex(std::string_view bytes);

/// Uniform draw in [0, n) by rejection sampling on the raw engine output.
/// Unlike std::uniform_int_distribution this is identical across standard libraries.
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

// ---- files -------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);

/// Writes `bytes` to `path` once. If the file exists with identical bytes this is a
/// no-op; if it exists with different bytes a DataError is thrown.
void write_once(const std::filesystem::path& path, std::string_view bytes);

/// Plain overwrite, for report files.
void write_file(const std::filesystem::path& path, std::string_view bytes);

// ---- csv ---------------------------------------------------------------------

using CsvRow = std::vector<std::string>;

/// RFC 4180 subset: quoted fields, doubled quotes, CRLF or LF line ends.
std::vector<CsvRow> parse_csv(std::string_view text);
std::string csv_field(std::string_view field);
std::string csv_line(std::span<const std::string> fields);

/// Shortest repr that round-trips a double.
std::string format_real(double value);

bool parse_bool_token(std::string_view token, bool& out);

}  // namespace simulacra

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curp/types.hpp"

namespace curp {

// CRC-32, IEEE polynomial (same convention as zlib).
std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t len);
std::uint32_t crc32_ieee(const std::vector<std::uint8_t>& data);

// "CURPEMB1" | u32 count | u32 dim | count*dim f32 LE | u32 crc32 of all bytes
// after the magic. Values are stored as f32; doubles are narrowed on write.
void write_pool(const std::string& path, const EmbeddingPool& pool);
EmbeddingPool read_pool(const std::string& path);

// "CURPCBK1" | u32 K | u32 L | u32 sub_dim | u32 dim | K*sub_dim f32 LE | crc.
// The trailing CRC doubles as the codebook identity used by the edge protocol.
void write_codebook(const std::string& path, const Codebook& cb);
Codebook read_codebook(const std::string& path);

// CRC-32 of the codebook's serialized header+payload, identical to the file's
// trailing checksum.
std::uint32_t codebook_crc(const Codebook& cb);

// Fixed-width bit packing: ceil(log2 K) bits per index, event-major then
// subspace-major, MSB-first within the stream; the last byte is zero padded.
std::uint32_t index_bits(const CodebookSpec& spec);
std::size_t packed_size(std::size_t count, const CodebookSpec& spec);
std::vector<std::uint8_t> pack_indices(const std::vector<PQCode>& codes,
                                       const CodebookSpec& spec);
std::vector<PQCode> unpack_indices(const std::vector<std::uint8_t>& bytes,
                                   const CodebookSpec& spec, std::size_t count);

// "CURPIDX1" | u32 count | u32 K | u32 L | packed payload | crc. The on-disk
// form of an index stream, used by the encode/stats subcommands.
void write_indices(const std::string& path, const std::vector<PQCode>& codes,
                   const CodebookSpec& spec);
std::vector<PQCode> read_indices(const std::string& path, const CodebookSpec& spec);

// "CURPREC1" | u32 record count | u32 dim | records | crc, where one record is
// u32 id_len | id bytes | u32 J | J*dim f32 | u32 |Q| | Q u32s | u32 |R| | R u32s.
void write_records(const std::string& path, const std::vector<UserRecord>& records,
                   std::uint32_t dim);
std::vector<UserRecord> read_records(const std::string& path);

} // namespace curp

#include "curp/codec.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <zlib.h>

namespace curp {

std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t len) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

std::uint32_t crc32_ieee(const std::vector<std::uint8_t>& data) {
    return crc32_ieee(data.data(), data.size());
}

namespace {

constexpr char kPoolMagic[8] = {'C', 'U', 'R', 'P', 'E', 'M', 'B', '1'};
constexpr char kCbkMagic[8] = {'C', 'U', 'R', 'P', 'C', 'B', 'K', '1'};
constexpr char kIdxMagic[8] = {'C', 'U', 'R', 'P', 'I', 'D', 'X', '1'};
constexpr char kRecMagic[8] = {'C', 'U', 'R', 'P', 'R', 'E', 'C', '1'};

struct Writer {
    std::vector<std::uint8_t> bytes;

    void u32(std::uint32_t v) {
        bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
        bytes.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
        bytes.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
        bytes.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
    }
    void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
};

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw Truncated("unexpected end of file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = bytes[pos] | (bytes[pos + 1] << 8) |
                          (bytes[pos + 2] << 16) |
                          (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    double f32() { return std::bit_cast<float>(u32()); }
};

// write to a temp file in the same directory, then rename into place
void write_file(const std::string& path, const char magic[8],
                const std::vector<std::uint8_t>& body) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoFailure("cannot open " + tmp + " for writing");
        os.write(magic, 8);
        os.write(reinterpret_cast<const char*>(body.data()),
                 static_cast<std::streamsize>(body.size()));
        const std::uint32_t crc = crc32_ieee(body);
        std::uint8_t tail[4] = {static_cast<std::uint8_t>(crc & 0xff),
                                static_cast<std::uint8_t>((crc >> 8) & 0xff),
                                static_cast<std::uint8_t>((crc >> 16) & 0xff),
                                static_cast<std::uint8_t>((crc >> 24) & 0xff)};
        os.write(reinterpret_cast<const char*>(tail), 4);
        if (!os) throw IoFailure("write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoFailure("rename to " + path + " failed: " + ec.message());
}

// returns the body (bytes between magic and CRC) after validating both
std::vector<std::uint8_t> read_file(const std::string& path, const char magic[8]) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoFailure("cannot open " + path);
    std::vector<std::uint8_t> all((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
    if (all.size() < 12) throw Truncated(path + " too short");
    if (std::memcmp(all.data(), magic, 8) != 0) {
        throw BadMagic(path + " has wrong magic");
    }
    const std::size_t body_len = all.size() - 12;
    const std::uint8_t* tail = all.data() + 8 + body_len;
    const std::uint32_t stored = tail[0] | (tail[1] << 8) | (tail[2] << 16) |
                                 (static_cast<std::uint32_t>(tail[3]) << 24);
    if (crc32_ieee(all.data() + 8, body_len) != stored) {
        throw CrcMismatch(path + " checksum mismatch");
    }
    return {all.begin() + 8, all.end() - 4};
}

} // namespace

void write_pool(const std::string& path, const EmbeddingPool& pool) {
    Writer w;
    w.u32(static_cast<std::uint32_t>(pool.count()));
    w.u32(static_cast<std::uint32_t>(pool.dim()));
    for (double v : pool.data.data) w.f32(v);
    write_file(path, kPoolMagic, w.bytes);
}

EmbeddingPool read_pool(const std::string& path) {
    const auto body = read_file(path, kPoolMagic);
    Reader r{body};
    const std::uint32_t count = r.u32();
    const std::uint32_t dim = r.u32();
    r.need(static_cast<std::size_t>(count) * dim * 4);
    EmbeddingPool pool;
    pool.data = Matrix(count, dim);
    for (double& v : pool.data.data) v = r.f32();
    return pool;
}

void write_codebook(const std::string& path, const Codebook& cb) {
    validate_spec(cb.spec);
    Writer w;
    w.u32(cb.spec.vocab_size);
    w.u32(cb.spec.num_subspaces);
    w.u32(cb.spec.sub_dim);
    w.u32(cb.spec.dim);
    for (double v : cb.entries.data) w.f32(v);
    write_file(path, kCbkMagic, w.bytes);
}

Codebook read_codebook(const std::string& path) {
    const auto body = read_file(path, kCbkMagic);
    Reader r{body};
    Codebook cb;
    cb.spec.vocab_size = r.u32();
    cb.spec.num_subspaces = r.u32();
    cb.spec.sub_dim = r.u32();
    cb.spec.dim = r.u32();
    if (cb.spec.dim !=
        static_cast<std::uint64_t>(cb.spec.num_subspaces) * cb.spec.sub_dim) {
        throw SpecInconsistent(path + ": dim != L * sub_dim");
    }
    try {
        validate_spec(cb.spec);
    } catch (const Error& e) {
        throw SpecInconsistent(path + ": " + e.what());
    }
    r.need(static_cast<std::size_t>(cb.spec.vocab_size) * cb.spec.sub_dim * 4);
    cb.entries = Matrix(cb.spec.vocab_size, cb.spec.sub_dim);
    for (double& v : cb.entries.data) v = r.f32();
    return cb;
}

std::uint32_t codebook_crc(const Codebook& cb) {
    Writer w;
    w.u32(cb.spec.vocab_size);
    w.u32(cb.spec.num_subspaces);
    w.u32(cb.spec.sub_dim);
    w.u32(cb.spec.dim);
    for (double v : cb.entries.data) w.f32(v);
    return crc32_ieee(w.bytes);
}

std::uint32_t index_bits(const CodebookSpec& spec) {
    std::uint32_t b = 1;
    while ((1u << b) < spec.vocab_size) ++b;
    return b;
}

std::size_t packed_size(std::size_t count, const CodebookSpec& spec) {
    const std::size_t bits = count * spec.num_subspaces * index_bits(spec);
    return (bits + 7) / 8;
}

std::vector<std::uint8_t> pack_indices(const std::vector<PQCode>& codes,
                                       const CodebookSpec& spec) {
    const std::uint32_t b = index_bits(spec);
    std::vector<std::uint8_t> out(packed_size(codes.size(), spec), 0);
    std::size_t bit = 0;
    for (const PQCode& code : codes) {
        code.validate(spec);
        for (std::uint32_t idx : code.indices) {
            for (std::uint32_t i = 0; i < b; ++i, ++bit) {
                if (idx & (1u << (b - 1 - i))) {
                    out[bit / 8] |= static_cast<std::uint8_t>(0x80u >> (bit % 8));
                }
            }
        }
    }
    return out;
}

std::vector<PQCode> unpack_indices(const std::vector<std::uint8_t>& bytes,
                                   const CodebookSpec& spec, std::size_t count) {
    const std::uint32_t b = index_bits(spec);
    if (bytes.size() < packed_size(count, spec)) {
        throw Truncated("index payload shorter than declared count");
    }
    std::vector<PQCode> out;
    out.reserve(count);
    std::size_t bit = 0;
    for (std::size_t c = 0; c < count; ++c) {
        PQCode code;
        code.indices.reserve(spec.num_subspaces);
        for (std::uint32_t l = 0; l < spec.num_subspaces; ++l) {
            std::uint32_t idx = 0;
            for (std::uint32_t i = 0; i < b; ++i, ++bit) {
                idx <<= 1;
                if (bytes[bit / 8] & (0x80u >> (bit % 8))) idx |= 1;
            }
            if (idx >= spec.vocab_size) {
                throw IndexOutOfRange("unpacked index " + std::to_string(idx) +
                                      " >= vocab_size");
            }
            code.indices.push_back(idx);
        }
        out.push_back(std::move(code));
    }
    return out;
}

void write_indices(const std::string& path, const std::vector<PQCode>& codes,
                   const CodebookSpec& spec) {
    Writer w;
    w.u32(static_cast<std::uint32_t>(codes.size()));
    w.u32(spec.vocab_size);
    w.u32(spec.num_subspaces);
    const auto packed = pack_indices(codes, spec);
    w.raw(packed.data(), packed.size());
    write_file(path, kIdxMagic, w.bytes);
}

std::vector<PQCode> read_indices(const std::string& path, const CodebookSpec& spec) {
    const auto body = read_file(path, kIdxMagic);
    Reader r{body};
    const std::uint32_t count = r.u32();
    const std::uint32_t k = r.u32();
    const std::uint32_t l = r.u32();
    if (k != spec.vocab_size || l != spec.num_subspaces) {
        throw SpecInconsistent(path + ": index stream spec mismatch");
    }
    std::vector<std::uint8_t> payload(body.begin() + r.pos, body.end());
    return unpack_indices(payload, spec, count);
}

void write_records(const std::string& path, const std::vector<UserRecord>& records,
                   std::uint32_t dim) {
    Writer w;
    w.u32(static_cast<std::uint32_t>(records.size()));
    w.u32(dim);
    for (const UserRecord& rec : records) {
        if (rec.histories.cols != dim) throw DimMismatch("record history dim");
        w.u32(static_cast<std::uint32_t>(rec.user_id.size()));
        w.raw(rec.user_id.data(), rec.user_id.size());
        w.u32(static_cast<std::uint32_t>(rec.histories.rows));
        for (double v : rec.histories.data) w.f32(v);
        w.u32(static_cast<std::uint32_t>(rec.query_tokens.size()));
        for (std::uint32_t t : rec.query_tokens) w.u32(t);
        w.u32(static_cast<std::uint32_t>(rec.response_tokens.size()));
        for (std::uint32_t t : rec.response_tokens) w.u32(t);
    }
    write_file(path, kRecMagic, w.bytes);
}

std::vector<UserRecord> read_records(const std::string& path) {
    const auto body = read_file(path, kRecMagic);
    Reader r{body};
    const std::uint32_t count = r.u32();
    const std::uint32_t dim = r.u32();
    std::vector<UserRecord> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        UserRecord rec;
        const std::uint32_t id_len = r.u32();
        r.need(id_len);
        rec.user_id.assign(reinterpret_cast<const char*>(body.data() + r.pos), id_len);
        r.pos += id_len;
        const std::uint32_t j = r.u32();
        r.need(static_cast<std::size_t>(j) * dim * 4);
        rec.histories = Matrix(j, dim);
        for (double& v : rec.histories.data) v = r.f32();
        const std::uint32_t q = r.u32();
        for (std::uint32_t t = 0; t < q; ++t) rec.query_tokens.push_back(r.u32());
        const std::uint32_t resp = r.u32();
        for (std::uint32_t t = 0; t < resp; ++t) rec.response_tokens.push_back(r.u32());
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace curp

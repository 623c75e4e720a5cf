#include "ibra/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ibra/error.hpp"

namespace ibra {

namespace {

const char kMagic[4] = {'I', 'B', 'R', 'T'};

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_integral_v<T>);
    unsigned char buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<unsigned char>((static_cast<uint64_t>(value) >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw FormatError("IBRT: truncated header");
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

void write_f64(std::ostream& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_le(out, bits);
}

double read_f64(std::istream& in) {
    uint64_t bits = read_le<uint64_t>(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void write_f32(std::ostream& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_le(out, bits);
}

float read_f32(std::istream& in) {
    uint32_t bits = read_le<uint32_t>(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

IbrtCode default_code(Dtype dt) {
    switch (dt) {
        case Dtype::Real: return IbrtCode::Real64;
        case Dtype::Int32: return IbrtCode::Int32;
        case Dtype::Bit: return IbrtCode::BitPacked;
    }
    return IbrtCode::Real64;
}

}  // namespace

void write_ibrt(std::ostream& out, const Tensor& t) { write_ibrt(out, t, default_code(t.dtype())); }

void write_ibrt(std::ostream& out, const Tensor& t, IbrtCode code) {
    out.write(kMagic, 4);
    write_le<uint8_t>(out, kIbrtVersion);
    write_le<uint8_t>(out, static_cast<uint8_t>(code));
    write_le<uint32_t>(out, static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape()) write_le<uint64_t>(out, static_cast<uint64_t>(d));

    switch (code) {
        case IbrtCode::Real64: {
            const Tensor r = t.to_real();
            for (double v : r.reals()) write_f64(out, v);
            break;
        }
        case IbrtCode::Real32: {
            const Tensor r = t.to_real();
            for (double v : r.reals()) write_f32(out, static_cast<float>(v));
            break;
        }
        case IbrtCode::Int32:
            if (t.dtype() == Dtype::Real)
                for (double v : t.reals()) write_le<int32_t>(out, static_cast<int32_t>(v));
            else
                for (int32_t v : t.ints()) write_le(out, v);
            break;
        case IbrtCode::BitPacked: {
            if (t.dtype() != Dtype::Bit)
                throw FormatError("IBRT: bit-packed encoding requires a bit tensor");
            auto bits = t.ints();
            uint8_t acc = 0;
            int filled = 0;
            for (int64_t i = 0; i < t.numel(); ++i) {
                acc |= static_cast<uint8_t>(bits[static_cast<size_t>(i)] & 1) << filled;
                if (++filled == 8) {
                    write_le(out, acc);
                    acc = 0;
                    filled = 0;
                }
            }
            if (filled > 0) write_le(out, acc);
            break;
        }
    }
    if (!out) throw FormatError("IBRT: write failed");
}

Tensor read_ibrt(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("IBRT: bad magic bytes");
    uint8_t version = read_le<uint8_t>(in);
    if (version != kIbrtVersion)
        throw FormatError("IBRT: unsupported version " + std::to_string(version));
    uint8_t code_raw = read_le<uint8_t>(in);
    if (code_raw > 3) throw FormatError("IBRT: unknown dtype code " + std::to_string(code_raw));
    auto code = static_cast<IbrtCode>(code_raw);
    uint32_t rank = read_le<uint32_t>(in);
    if (rank > 16) throw FormatError("IBRT: implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(read_le<uint64_t>(in));
    int64_t n = numel_of(shape);

    switch (code) {
        case IbrtCode::Real64: {
            std::vector<double> data(static_cast<size_t>(n));
            for (auto& v : data) v = read_f64(in);
            if (!in) throw FormatError("IBRT: truncated data");
            return Tensor::from_reals(std::move(shape), std::move(data));
        }
        case IbrtCode::Real32: {
            std::vector<double> data(static_cast<size_t>(n));
            for (auto& v : data) v = static_cast<double>(read_f32(in));
            if (!in) throw FormatError("IBRT: truncated data");
            return Tensor::from_reals(std::move(shape), std::move(data));
        }
        case IbrtCode::Int32: {
            std::vector<int32_t> data(static_cast<size_t>(n));
            for (auto& v : data) v = read_le<int32_t>(in);
            if (!in) throw FormatError("IBRT: truncated data");
            return Tensor::from_ints(std::move(shape), std::move(data));
        }
        case IbrtCode::BitPacked: {
            std::vector<int32_t> data(static_cast<size_t>(n));
            uint8_t acc = 0;
            for (int64_t i = 0; i < n; ++i) {
                int off = static_cast<int>(i % 8);
                if (off == 0) acc = read_le<uint8_t>(in);
                data[static_cast<size_t>(i)] = (acc >> off) & 1;
            }
            if (!in) throw FormatError("IBRT: truncated data");
            return Tensor::from_ints(std::move(shape), std::move(data), Dtype::Bit);
        }
    }
    throw FormatError("IBRT: unreachable dtype");
}

void save_ibrt(const std::string& path, const Tensor& t) {
    save_ibrt(path, t, default_code(t.dtype()));
}

void save_ibrt(const std::string& path, const Tensor& t, IbrtCode code) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for write: " + path);
    write_ibrt(f, t, code);
}

Tensor load_ibrt(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open: " + path);
    return read_ibrt(f);
}

}  // namespace ibra

#include "mugl/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "mugl/errors.hpp"

namespace mugl {

namespace {

constexpr char kMagic[8] = {'M', 'U', 'G', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

bool read_u32(std::istream& is, std::uint32_t& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return is.gcount() == sizeof(v);
}

static_assert(sizeof(float) == 4, "checkpoint payload assumes 32-bit floats");

} // namespace

int ParameterStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw Error("duplicate parameter name: " + name);
    Entry e;
    e.name = name;
    e.grad = Tensor(init.shape());
    e.m = Tensor(init.shape());
    e.v = Tensor(init.shape());
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    const int h = static_cast<int>(entries_.size()) - 1;
    index_[name] = h;
    return h;
}

int ParameterStore::handle(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

std::int64_t ParameterStore::total_parameters() const {
    std::int64_t n = 0;
    for (const Entry& e : entries_) n += e.value.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (Entry& e : entries_) e.grad.fill(0.0);
}

double ParameterStore::grad_norm() const {
    double sq = 0.0;
    for (const Entry& e : entries_)
        for (std::int64_t i = 0; i < e.grad.size(); ++i) sq += e.grad[i] * e.grad[i];
    return std::sqrt(sq);
}

void ParameterStore::adam_step(double lr, double beta1, double beta2, double eps, double clip) {
    double rescale = 1.0;
    if (clip > 0.0) {
        const double norm = grad_norm();
        if (norm > clip) rescale = clip / norm;
    }
    step_ += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (Entry& e : entries_) {
        for (std::int64_t i = 0; i < e.value.size(); ++i) {
            const double g = e.grad[i] * rescale;
            e.m[i] = beta1 * e.m[i] + (1.0 - beta1) * g;
            e.v[i] = beta2 * e.v[i] + (1.0 - beta2) * g * g;
            const double mhat = e.m[i] / bc1;
            const double vhat = e.v[i] / bc2;
            e.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void ParameterStore::reset_optimizer() {
    step_ = 0;
    for (Entry& e : entries_) {
        e.m.fill(0.0);
        e.v.fill(0.0);
    }
}

void ParameterStore::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoFailure("cannot open checkpoint for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, kVersion);
    for (const Entry& e : entries_) {
        write_u32(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_u32(os, static_cast<std::uint32_t>(e.value.rank()));
        for (std::int64_t d : e.value.shape()) write_u32(os, static_cast<std::uint32_t>(d));
        std::vector<float> payload(static_cast<std::size_t>(e.value.size()));
        for (std::int64_t i = 0; i < e.value.size(); ++i)
            payload[static_cast<std::size_t>(i)] = static_cast<float>(e.value[i]);
        os.write(reinterpret_cast<const char*>(payload.data()),
                 static_cast<std::streamsize>(payload.size() * sizeof(float)));
    }
    if (!os) throw IoFailure("checkpoint write failed: " + path);
}

void ParameterStore::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoFailure("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (is.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw CorruptArchive("bad checkpoint magic in " + path);
    std::uint32_t version = 0;
    if (!read_u32(is, version) || version != kVersion)
        throw CorruptArchive("unsupported checkpoint version");

    const bool populate = entries_.empty();
    std::size_t seen = 0;
    while (true) {
        std::uint32_t name_len = 0;
        if (!read_u32(is, name_len)) break; // clean EOF
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        std::uint32_t rank = 0;
        if (is.gcount() != static_cast<std::streamsize>(name_len) || !read_u32(is, rank))
            throw CorruptArchive("truncated checkpoint record");
        std::vector<std::int64_t> shape(rank);
        for (std::uint32_t r = 0; r < rank; ++r) {
            std::uint32_t d = 0;
            if (!read_u32(is, d)) throw CorruptArchive("truncated checkpoint shape");
            shape[r] = d;
        }
        const std::int64_t numel = Tensor::element_count(shape);
        std::vector<float> payload(static_cast<std::size_t>(numel));
        is.read(reinterpret_cast<char*>(payload.data()),
                static_cast<std::streamsize>(payload.size() * sizeof(float)));
        if (is.gcount() != static_cast<std::streamsize>(payload.size() * sizeof(float)))
            throw CorruptArchive("truncated checkpoint payload for " + name);

        std::vector<double> values(payload.begin(), payload.end());
        if (populate) {
            add(name, Tensor::from(shape, std::move(values)));
        } else {
            const int h = handle(name);
            if (h < 0) throw CorruptArchive("checkpoint parameter not in model: " + name);
            Tensor& dst = value(h);
            if (dst.shape() != shape)
                throw CorruptArchive("checkpoint shape mismatch for " + name);
            for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] = values[static_cast<std::size_t>(i)];
        }
        seen++;
    }
    if (!populate && seen != entries_.size())
        throw CorruptArchive("checkpoint parameter count differs from model");
    reset_optimizer();
}

} // namespace mugl

#include "gelenet/parameter.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

namespace gelenet {

void Parameter::apply_mask()
{
    if (!mask)
        return;
    auto d = value.data();
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] *= (*mask)[i];
}

Parameter& ParameterSet::create(const std::string& name, Shape shape, double fill)
{
    if (find(name) != nullptr)
        throw std::invalid_argument("duplicate parameter name '" + name + "'");
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = Tensor(shape, fill, true);
    p->m = Tensor::zeros(shape);
    p->v = Tensor::zeros(shape);
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter* ParameterSet::find(const std::string& name)
{
    for (auto& p : params_)
        if (p->name == name)
            return p.get();
    return nullptr;
}

Parameter& ParameterSet::get(const std::string& name)
{
    if (auto* p = find(name))
        return *p;
    throw std::out_of_range("no parameter named '" + name + "'");
}

const Parameter& ParameterSet::get(const std::string& name) const
{
    for (const auto& p : params_)
        if (p->name == name)
            return *p;
    throw std::out_of_range("no parameter named '" + name + "'");
}

std::size_t ParameterSet::scalar_count() const
{
    std::size_t total = 0;
    for (const auto& p : params_)
        total += p->value.size();
    return total;
}

void ParameterSet::clear_grads()
{
    for (auto& p : params_)
        p->value.clear_grad();
}

namespace {

constexpr char kMagic[8] = {'G', 'E', 'L', 'E', 'N', 'E', 'T', '1'};

void put_u64(std::ostream& os, std::uint64_t v)
{
    unsigned char b[8];
    for (int i = 0; i < 8; ++i)
        b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

bool get_u64(std::istream& is, std::uint64_t& v)
{
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        return false;
    v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return true;
}

void put_f64(std::ostream& os, double d)
{
    put_u64(os, std::bit_cast<std::uint64_t>(d));
}

} // namespace

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw CheckpointError("cannot open checkpoint for writing: " + path.string());
    os.write(kMagic, sizeof(kMagic));
    for (const auto& p : params) {
        put_u64(os, p->name.size());
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        const Shape& s = p->value.shape();
        for (std::size_t d : {s.n, s.c, s.h, s.w})
            put_u64(os, d);
        for (double v : p->value.data())
            put_f64(os, v);
    }
    if (!os)
        throw CheckpointError("write failed: " + path.string());
}

void load_checkpoint(ParameterSet& params, const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw CheckpointError("cannot open checkpoint: " + path.string());
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw CheckpointError("not a GELENET1 checkpoint: " + path.string());

    std::set<std::string> seen;
    std::uint64_t name_len = 0;
    while (get_u64(is, name_len)) {
        if (name_len > 4096)
            throw CheckpointError("corrupt checkpoint record in " + path.string());
        std::string name(name_len, '\0');
        std::uint64_t dims[4];
        if (!is.read(name.data(), static_cast<std::streamsize>(name_len)) || !get_u64(is, dims[0]) ||
            !get_u64(is, dims[1]) || !get_u64(is, dims[2]) || !get_u64(is, dims[3]))
            throw CheckpointError("truncated checkpoint record in " + path.string());
        Parameter* p = params.find(name);
        if (p == nullptr)
            throw CheckpointError("checkpoint parameter '" + name + "' does not exist in this model");
        const Shape shape{dims[0], dims[1], dims[2], dims[3]};
        if (shape != p->value.shape())
            throw CheckpointError("checkpoint parameter '" + name + "' has shape " + shape.str() +
                                  " but the model expects " + p->value.shape().str());
        for (double& v : p->value.data()) {
            std::uint64_t bits = 0;
            if (!get_u64(is, bits))
                throw CheckpointError("truncated values for '" + name + "'");
            v = std::bit_cast<double>(bits);
        }
        seen.insert(name);
    }
    for (const auto& p : params)
        if (!seen.count(p->name))
            throw CheckpointError("checkpoint is missing parameter '" + p->name + "'");
}

} // namespace gelenet

#include "flowrl/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "flowrl/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace flowrl {

void Checkpoint::add(const std::string& name, const MlpParams& params) {
    nets.emplace_back(name, params);
}

const MlpParams* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, p] : nets)
        if (n == name) return &p;
    return nullptr;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw StateError("checkpoint save: cannot open " + path.string());
    f << "flowrl-checkpoint v1\n";
    f << "nets " << nets.size() << "\n";
    for (const auto& [name, p] : nets) {
        f << "net " << name << " dims";
        for (std::size_t d : p.dims()) f << " " << d;
        f << "\n";
    }
    f << "data\n";
    for (const auto& [name, p] : nets)
        for (const MlpParams::Layer& l : p.layers) {
            f.write(reinterpret_cast<const char*>(l.w.data.data()),
                    static_cast<std::streamsize>(l.w.size() * sizeof(double)));
            f.write(reinterpret_cast<const char*>(l.b.data.data()),
                    static_cast<std::streamsize>(l.b.size() * sizeof(double)));
        }
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw StateError("checkpoint load: cannot open " + path.string());
    std::string line;
    std::getline(f, line);
    if (line != "flowrl-checkpoint v1") throw ParseError("checkpoint: bad magic line");
    std::getline(f, line);
    std::size_t count = 0;
    {
        std::istringstream ss(line);
        std::string key;
        ss >> key >> count;
        if (key != "nets") throw ParseError("checkpoint: expected net count");
    }
    Checkpoint ck;
    std::vector<std::vector<std::size_t>> all_dims;
    for (std::size_t i = 0; i < count; ++i) {
        std::getline(f, line);
        std::istringstream ss(line);
        std::string key, name, dims_kw;
        ss >> key >> name >> dims_kw;
        if (key != "net" || dims_kw != "dims") throw ParseError("checkpoint: malformed net line");
        std::vector<std::size_t> dims;
        std::size_t d;
        while (ss >> d) dims.push_back(d);
        if (dims.size() < 2) throw ParseError("checkpoint: net needs at least two dims");
        ck.nets.emplace_back(name, MlpParams{});
        all_dims.push_back(std::move(dims));
    }
    std::getline(f, line);
    if (line != "data") throw ParseError("checkpoint: missing data marker");
    for (std::size_t i = 0; i < count; ++i) {
        MlpParams& p = ck.nets[i].second;
        const std::vector<std::size_t>& dims = all_dims[i];
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            MlpParams::Layer layer;
            layer.w = Tensor::zeros({dims[l + 1], dims[l]});
            layer.b = Tensor::zeros({dims[l + 1]});
            f.read(reinterpret_cast<char*>(layer.w.data.data()),
                   static_cast<std::streamsize>(layer.w.size() * sizeof(double)));
            f.read(reinterpret_cast<char*>(layer.b.data.data()),
                   static_cast<std::streamsize>(layer.b.size() * sizeof(double)));
            if (!f) throw ParseError("checkpoint: truncated data section");
            p.layers.push_back(std::move(layer));
        }
        p.validate();
    }
    return ck;
}

}  // namespace flowrl

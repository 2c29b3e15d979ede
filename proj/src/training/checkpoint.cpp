#include <bit>
#include <cstring>
#include <fstream>

#include "tfno/errors.hpp"
#include "tfno/training/config_io.hpp"
#include "tfno/training/training.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace tfno::train {

namespace {

void put_u32(std::ofstream& os, std::size_t v)
{
    if (v > 0xFFFFFFFFu) throw std::length_error("checkpoint: value does not fit in 32 bits");
    const auto x = static_cast<std::uint32_t>(v);
    os.write(reinterpret_cast<const char*>(&x), 4);
}

std::uint32_t get_u32(std::ifstream& is, const std::string& path)
{
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IncompatibleArtifact(path + ": truncated checkpoint");
    return v;
}

std::string get_bytes(std::ifstream& is, std::size_t n, const std::string& path)
{
    std::string s(n, '\0');
    if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) throw IncompatibleArtifact(path + ": truncated checkpoint");
    return s;
}

} // namespace

void save_checkpoint(const std::string& path, const op::NeuralOperator& model, const sim::Normalization& norm,
                     const std::string& extra_json)
{
    Json cfg;
    cfg["operator"] = to_json(model.config());
    cfg["normalization"] = to_json(norm);
    cfg["run"] = parse_json(extra_json, "checkpoint extra config");
    const std::string text = cfg.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write("TFNC", 4);
    os.put(1);
    put_u32(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    put_u32(os, model.params().size());
    for (const auto& b : model.params()) {
        put_u32(os, b.name.size());
        os.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
        put_u32(os, b.value.rank());
        for (std::size_t e : b.value.shape()) put_u32(os, e);
        os.write(reinterpret_cast<const char*>(b.value.data().data()),
                 static_cast<std::streamsize>(b.value.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IncompatibleArtifact("cannot open checkpoint " + path);
    if (get_bytes(is, 4, path) != "TFNC") throw IncompatibleArtifact(path + ": not a TFNC checkpoint");
    const int version = is.get();
    if (version != 1) throw IncompatibleArtifact(path + ": unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.config_text = get_bytes(is, get_u32(is, path), path);
    op::OperatorConfig oc;
    try {
        const Json cfg = Json::parse(ck.config_text);
        oc = operator_config_from_json(cfg.at("operator"));
        ck.norm = normalization_from_json(cfg.at("normalization"));
    } catch (const nlohmann::json::exception& e) {
        throw IncompatibleArtifact(path + ": bad config block: " + e.what());
    } catch (const ConfigError& e) {
        throw IncompatibleArtifact(path + ": bad config block: " + e.what());
    }
    const std::uint32_t blocks = get_u32(is, path);
    std::vector<op::ParamBlock> params;
    for (std::uint32_t k = 0; k < blocks; ++k) {
        op::ParamBlock b;
        b.name = get_bytes(is, get_u32(is, path), path);
        Shape shape(get_u32(is, path));
        for (auto& e : shape) e = get_u32(is, path);
        b.value = Tensor(shape);
        if (!is.read(reinterpret_cast<char*>(b.value.data().data()), static_cast<std::streamsize>(b.value.size() * sizeof(double))))
            throw IncompatibleArtifact(path + ": truncated parameter block '" + b.name + "'");
        params.push_back(std::move(b));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw IncompatibleArtifact(path + ": trailing bytes");
    ck.model = op::NeuralOperator(oc, std::move(params)); // validates names and shapes
    return ck;
}

} // namespace tfno::train

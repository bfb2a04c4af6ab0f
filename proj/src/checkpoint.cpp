#include <bit>
#include <cstring>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "rdcl/io/image.hpp"
#include "rdcl/model.hpp"

namespace rdcl {

using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[4] = {'R', 'D', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

json config_json(const ModelConfig& c) {
    const auto& t = c.transform_config;
    return {{"transform", c.transform},
            {"context", context::to_string(c.context)},
            {"M", t.M},
            {"N", t.N},
            {"width", t.width},
            {"blocks", t.blocks},
            {"seed", t.seed},
            {"context_hidden", c.context_hidden},
            {"context_kernel", c.context_kernel},
            {"lambdas", c.grid.values},
            {"lambda_ref", c.grid.lambda_ref}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.transform = j.at("transform").get<std::string>();
    c.context = context::parse_context_kind(j.at("context").get<std::string>());
    c.transform_config.M = j.at("M").get<int>();
    c.transform_config.N = j.at("N").get<int>();
    c.transform_config.width = j.at("width").get<int>();
    c.transform_config.blocks = j.at("blocks").get<int>();
    c.transform_config.seed = j.at("seed").get<std::uint64_t>();
    c.context_hidden = j.at("context_hidden").get<int>();
    c.context_kernel = j.at("context_kernel").get<int>();
    c.grid.values = j.at("lambdas").get<std::vector<double>>();
    c.grid.lambda_ref = j.at("lambda_ref").get<double>();
    return c;
}

void append_floats(std::vector<std::uint8_t>& out, const std::vector<float>& v) {
    const std::size_t at = out.size();
    out.resize(at + v.size() * sizeof(float));
    if (!v.empty()) std::memcpy(out.data() + at, v.data(), v.size() * sizeof(float));
}

template <class T>
void append_pod(std::vector<std::uint8_t>& out, T value) {
    const std::size_t at = out.size();
    out.resize(at + sizeof(T));
    std::memcpy(out.data() + at, &value, sizeof(T));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw DataError("checkpoint is truncated");
    }
    template <class T>
    T pod() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string text(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void floats(std::vector<float>& out, std::size_t n) {
        need(n * sizeof(float));
        out.resize(n);
        if (n) std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(float));
        pos_ += n * sizeof(float);
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const CompressionModel& model, const TrainingState& state) {
    json header;
    header["config"] = config_json(model.config());
    header["gains"] = model.gains();
    json tensors = json::array();
    const auto params = model.params();
    for (const nn::Param* p : params) tensors.push_back({{"name", p->name}, {"shape", p->shape}, {"count", p->size()}});
    header["tensors"] = tensors;
    json st{{"phase", state.phase}, {"epoch", state.epoch}};
    if (state.optimizer) {
        json moments = json::array();
        for (const auto& [name, m] : state.optimizer->moments) moments.push_back({{"name", name}, {"count", m.m.size()}});
        st["optimizer"] = {{"steps", state.optimizer->steps}, {"lr", state.optimizer->lr}, {"moments", moments}};
    }
    header["state"] = st;
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
    append_pod(out, kCheckpointVersion);
    append_pod(out, static_cast<std::uint64_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (const nn::Param* p : params) append_floats(out, p->value);
    if (state.optimizer)
        for (const auto& [name, m] : state.optimizer->moments) {
            if (m.m.size() != m.v.size()) throw ContractError("optimizer moments for " + name + " differ in size");
            append_floats(out, m.m);
            append_floats(out, m.v);
        }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const CompressionModel& model, const TrainingState& state) {
    io::write_file_atomic(path, serialize_checkpoint(model, state));
}

LoadedCheckpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (r.text(4) != std::string(kCheckpointMagic, 4)) throw DataError("not a checkpoint (bad magic)");
    if (const auto v = r.pod<std::uint32_t>(); v != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(v));
    const auto len = r.pod<std::uint64_t>();
    if (len > bytes.size()) throw DataError("checkpoint is truncated");
    json header;
    try {
        header = json::parse(r.text(static_cast<std::size_t>(len)));
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }

    LoadedCheckpoint out;
    try {
        out.model = std::make_unique<CompressionModel>(config_from_json(header.at("config")));
        auto params = out.model->params();
        std::unordered_map<std::string, nn::Param*> by_name;
        for (nn::Param* p : params) by_name[p->name] = p;
        const auto& dir = header.at("tensors");
        if (dir.size() != params.size()) throw DataError("checkpoint tensor count does not match the model");
        for (const auto& entry : dir) {
            const auto name = entry.at("name").get<std::string>();
            const auto it = by_name.find(name);
            if (it == by_name.end()) throw DataError("checkpoint tensor '" + name + "' is not part of the model");
            const auto count = entry.at("count").get<std::size_t>();
            if (count != it->second->size() || entry.at("shape").get<std::vector<int>>() != it->second->shape)
                throw DataError("checkpoint tensor '" + name + "' has the wrong shape");
            r.floats(it->second->value, count);
        }
        const auto& st = header.at("state");
        out.state.phase = st.at("phase").get<int>();
        out.state.epoch = st.at("epoch").get<int>();
        if (st.contains("optimizer")) {
            const auto& o = st.at("optimizer");
            OptimizerState os;
            os.steps = o.at("steps").get<std::size_t>();
            os.lr = o.at("lr").get<double>();
            for (const auto& m : o.at("moments")) {
                const auto count = m.at("count").get<std::size_t>();
                nn::Adam::Moments mom;
                r.floats(mom.m, count);
                r.floats(mom.v, count);
                os.moments[m.at("name").get<std::string>()] = std::move(mom);
            }
            out.state.optimizer = std::move(os);
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint header is malformed: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint config is invalid: ") + e.what());
    } catch (const LookupError& e) {
        throw DataError(std::string("checkpoint config is invalid: ") + e.what());
    }
    if (!r.done()) throw DataError("checkpoint has trailing bytes");
    return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(io::read_file(path)); }

}  // namespace rdcl

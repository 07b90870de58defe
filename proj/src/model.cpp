#include "miniformer/model.hpp"

#include <sstream>

namespace miniformer::models {

namespace {

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config: expected key=value, got '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

std::size_t kv_size(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("config: missing key '" + key + "'");
    try {
        return static_cast<std::size_t>(std::stoull(it->second));
    } catch (const std::exception&) {
        throw FormatError("config: bad number for '" + key + "': " + it->second);
    }
}

layers::FfnActivation kv_activation(const std::map<std::string, std::string>& kv,
                                    const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("config: missing key '" + key + "'");
    if (it->second == "none") return layers::FfnActivation::none;
    if (it->second == "relu") return layers::FfnActivation::relu;
    throw FormatError("config: bad activation '" + it->second + "'");
}

const char* activation_name(layers::FfnActivation a) {
    return a == layers::FfnActivation::relu ? "relu" : "none";
}

}  // namespace

std::string MiniFormerConfig::to_text() const {
    std::ostringstream os;
    os << "vocab_src=" << vocab_src << "\n";
    os << "vocab_tgt=" << vocab_tgt << "\n";
    os << "d_embed=" << d_embed << "\n";
    os << "d_hidden=" << d_hidden << "\n";
    os << "max_len=" << max_len << "\n";
    os << "ffn_activation=" << activation_name(ffn_activation) << "\n";
    return os.str();
}

MiniFormerConfig MiniFormerConfig::from_text(const std::string& text) {
    auto kv = parse_kv(text);
    MiniFormerConfig cfg;
    cfg.vocab_src = kv_size(kv, "vocab_src");
    cfg.vocab_tgt = kv_size(kv, "vocab_tgt");
    cfg.d_embed = kv_size(kv, "d_embed");
    cfg.d_hidden = kv_size(kv, "d_hidden");
    cfg.max_len = kv_size(kv, "max_len");
    cfg.ffn_activation = kv_activation(kv, "ffn_activation");
    cfg.validate();
    return cfg;
}

void MiniFormerConfig::validate() const {
    if (vocab_src < 5 || vocab_tgt < 5)
        throw ConfigError("miniformer: vocab sizes must cover the 4 reserved ids plus content");
    if (d_embed == 0 || d_hidden == 0 || max_len == 0)
        throw ConfigError("miniformer: dimensions must be positive");
}

std::string TransformerConfig::to_text() const {
    std::ostringstream os;
    os << "vocab_src=" << vocab_src << "\n";
    os << "vocab_tgt=" << vocab_tgt << "\n";
    os << "d_model=" << d_model << "\n";
    os << "n_heads=" << n_heads << "\n";
    os << "d_ff=" << d_ff << "\n";
    os << "n_layers_enc=" << n_layers_enc << "\n";
    os << "n_layers_dec=" << n_layers_dec << "\n";
    os << "max_len=" << max_len << "\n";
    os << "ffn_activation=" << activation_name(ffn_activation) << "\n";
    return os.str();
}

TransformerConfig TransformerConfig::from_text(const std::string& text) {
    auto kv = parse_kv(text);
    TransformerConfig cfg;
    cfg.vocab_src = kv_size(kv, "vocab_src");
    cfg.vocab_tgt = kv_size(kv, "vocab_tgt");
    cfg.d_model = kv_size(kv, "d_model");
    cfg.n_heads = kv_size(kv, "n_heads");
    cfg.d_ff = kv_size(kv, "d_ff");
    cfg.n_layers_enc = kv_size(kv, "n_layers_enc");
    cfg.n_layers_dec = kv_size(kv, "n_layers_dec");
    cfg.max_len = kv_size(kv, "max_len");
    cfg.ffn_activation = kv_activation(kv, "ffn_activation");
    cfg.validate();
    return cfg;
}

void TransformerConfig::validate() const {
    if (vocab_src < 5 || vocab_tgt < 5)
        throw ConfigError("transformer: vocab sizes must cover the 4 reserved ids plus content");
    if (d_model == 0 || d_ff == 0 || max_len == 0 || n_layers_enc == 0 || n_layers_dec == 0)
        throw ConfigError("transformer: dimensions must be positive");
    if (n_heads == 0 || d_model % n_heads != 0)
        throw ConfigError("transformer: d_model " + std::to_string(d_model) +
                          " not divisible by n_heads " + std::to_string(n_heads));
    if (d_model % 2 != 0)
        throw ConfigError("transformer: d_model must be even for the positional encoding");
}

void Seq2SeqModel::zero_grads() {
    for (Parameter& p : parameters()) p.tensor.zero_grad();
}

std::size_t count_params(const Seq2SeqModel& model) {
    return miniformer::count_params(model.parameters());
}

std::map<std::string, std::size_t> param_breakdown(const Seq2SeqModel& model) {
    std::map<std::string, std::size_t> groups;
    for (const Parameter& p : model.parameters()) {
        auto dot = p.name.find('.');
        groups[p.name.substr(0, dot)] += p.tensor.numel();
    }
    return groups;
}

std::unique_ptr<Seq2SeqModel> make_model(const std::string& kind, const std::string& config_text,
                                         std::uint64_t seed) {
    if (kind == "miniformer")
        return std::make_unique<MiniFormer>(MiniFormerConfig::from_text(config_text), seed);
    if (kind == "transformer")
        return std::make_unique<Transformer>(TransformerConfig::from_text(config_text), seed);
    throw ConfigError("unknown model kind '" + kind + "'");
}

}  // namespace miniformer::models

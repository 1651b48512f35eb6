#include "cosimgen/config.hpp"

#include <fstream>
#include <sstream>

#include "cosimgen/common.hpp"

namespace cosimgen {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

std::string int_list_to_string(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

void set_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "input_size")
        cfg.input_size = std::stoi(value);
    else if (key == "base_width")
        cfg.base_width = std::stoi(value);
    else if (key == "multipliers")
        cfg.multipliers = parse_int_list(value);
    else if (key == "embed_dim" || key == "D")
        cfg.embed_dim = std::stoi(value);
    else if (key == "class_feat_dim")
        cfg.class_feat_dim = std::stoi(value);
    else if (key == "sinusoid_dim")
        cfg.sinusoid_dim = std::stoi(value);
    else if (key == "gn_groups")
        cfg.gn_groups = std::stoi(value);
    else if (key == "text_backend")
        cfg.text_backend = value;
    else if (key == "T")
        cfg.T = std::stoi(value);
    else if (key == "beta_start")
        cfg.beta_start = std::stod(value);
    else if (key == "beta_end")
        cfg.beta_end = std::stod(value);
    else if (key == "learning_rate")
        cfg.learning_rate = std::stod(value);
    else if (key == "batch_size")
        cfg.batch_size = std::stoi(value);
    else if (key == "beta")
        cfg.beta = std::stod(value);
    else if (key == "lambda_perc")
        cfg.lambda_perc = std::stod(value);
    else if (key == "seed")
        cfg.seed = std::stoull(value);
    else if (key == "steps")
        cfg.steps = std::stoi(value);
    else if (key == "freeze_at")
        cfg.freeze_at = std::stod(value);
    else if (key == "discriminator_mode")
        cfg.discriminator_mode = value;
    else if (key == "checkpoint_every")
        cfg.checkpoint_every = std::stoi(value);
    else if (key == "snapshot_every")
        cfg.snapshot_every = std::stoi(value);
    else if (key == "noise_sigma")
        cfg.noise_sigma = std::stod(value);
    else if (key == "scales")
        cfg.scales = parse_int_list(value);
    else
        throw ConfigError("unknown config key: " + key);
}

} // namespace

void TrainConfig::validate() const {
    auto need = [](bool ok, const char* msg) {
        if (!ok) throw ConfigError(std::string("config: ") + msg);
    };
    need(input_size > 0 && base_width > 0 && embed_dim > 0 && class_feat_dim > 0, "positive dims required");
    need(sinusoid_dim > 0 && sinusoid_dim % 2 == 0, "sinusoid_dim must be even and positive");
    need(T >= 1, "T must be >= 1");
    need(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, "bad beta range");
    need(learning_rate > 0.0 && batch_size > 0 && steps >= 0, "bad optimization values");
    need(beta >= 0.0 && lambda_perc >= 0.0 && noise_sigma >= 0.0, "negative loss weights");
    need(freeze_at >= 0.0 && freeze_at <= 1.0, "freeze_at must be a fraction");
    need(!multipliers.empty(), "multipliers must be non-empty");
    for (size_t i = 1; i < multipliers.size(); ++i)
        need(multipliers[i] >= multipliers[i - 1], "multipliers must be non-decreasing");
    need(discriminator_mode == "alternate_freeze" || discriminator_mode == "never_freeze",
         "unknown discriminator_mode");
}

TrainConfig parse_train_config(const std::string& text) {
    TrainConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') continue; // section headers are cosmetic
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        try {
            set_key(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        } catch (const std::invalid_argument&) {
            throw ConfigError("config line " + std::to_string(lineno) + ": bad numeric value");
        }
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_train_config(ss.str());
}

std::string train_config_to_text(const TrainConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "[model]\n";
    os << "input_size = " << cfg.input_size << "\n";
    os << "base_width = " << cfg.base_width << "\n";
    os << "multipliers = " << int_list_to_string(cfg.multipliers) << "\n";
    os << "embed_dim = " << cfg.embed_dim << "\n";
    os << "class_feat_dim = " << cfg.class_feat_dim << "\n";
    os << "sinusoid_dim = " << cfg.sinusoid_dim << "\n";
    os << "gn_groups = " << cfg.gn_groups << "\n";
    os << "text_backend = " << cfg.text_backend << "\n";
    os << "[diffusion]\n";
    os << "T = " << cfg.T << "\n";
    os << "beta_start = " << cfg.beta_start << "\n";
    os << "beta_end = " << cfg.beta_end << "\n";
    os << "[optimization]\n";
    os << "learning_rate = " << cfg.learning_rate << "\n";
    os << "batch_size = " << cfg.batch_size << "\n";
    os << "beta = " << cfg.beta << "\n";
    os << "lambda_perc = " << cfg.lambda_perc << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "steps = " << cfg.steps << "\n";
    os << "freeze_at = " << cfg.freeze_at << "\n";
    os << "discriminator_mode = " << cfg.discriminator_mode << "\n";
    os << "checkpoint_every = " << cfg.checkpoint_every << "\n";
    os << "snapshot_every = " << cfg.snapshot_every << "\n";
    os << "[superres]\n";
    os << "noise_sigma = " << cfg.noise_sigma << "\n";
    os << "scales = " << int_list_to_string(cfg.scales) << "\n";
    return os.str();
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + assignment);
    set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    cfg.validate();
}

} // namespace cosimgen

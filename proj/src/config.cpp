#include "gelenet/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace gelenet {

namespace {

constexpr std::string_view kDeskPreset = R"(# Desk scale: small synthetic overfit task, single core.
input_size = 64
backbone.channels = 16,32,48,64
train.epochs = 300
train.batch_size = 8
train.lr = 1e-4
train.lr_decay_factor = 0.1
train.lr_decay_period = 200
train.max_iterations = 0
train.augment = off
data.source = synthetic
synth.seed = 0
synth.count = 8
synth.min_objects = 1
synth.max_objects = 2
synth.shapes = rectangle,ellipse,line
synth.min_extent = 0.22
synth.max_extent = 0.35
synth.line_min_half_width = 5
synth.line_max_half_width = 7
synth.low_contrast_fraction = 0.3
)";

constexpr std::string_view kPaperPreset = R"(# Full scale: 352x352 inputs, four-stage backbone widths of the reference transformer.
input_size = 352
backbone.channels = 64,128,320,512
train.epochs = 45
train.batch_size = 8
train.lr = 1e-4
train.lr_decay_factor = 0.1
train.lr_decay_period = 30
train.max_iterations = 0
train.augment = on
)";

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view v)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        const auto comma = v.find(',', start);
        const std::string item = trim(v.substr(start, comma == std::string_view::npos ? v.size() - start : comma - start));
        if (!item.empty())
            out.push_back(item);
        if (comma == std::string_view::npos)
            break;
        start = comma + 1;
    }
    return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view v)
{
    const std::string s = trim(v);
    T out{};
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    if (ec != std::errc() || p != end || s.empty())
        throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + s + "' as a number");
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(out))
            throw ConfigError("config key '" + std::string(key) + "': value must be finite");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view v)
{
    const std::string s = trim(v);
    if (s == "on" || s == "true" || s == "1" || s == "yes")
        return true;
    if (s == "off" || s == "false" || s == "0" || s == "no")
        return false;
    throw ConfigError("config key '" + std::string(key) + "': expected on/off, got '" + s + "'");
}

using Setter = std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)>;

template <typename T, typename Get>
Setter number(Get get)
{
    return [get](ExperimentConfig& c, std::string_view k, std::string_view v) { get(c) = parse_number<T>(k, v); };
}

template <typename Get>
Setter flag(Get get)
{
    return [get](ExperimentConfig& c, std::string_view k, std::string_view v) { get(c) = parse_bool(k, v); };
}

template <typename Parse, typename Get>
Setter parsed(Parse parse, Get get)
{
    return [parse, get](ExperimentConfig& c, std::string_view k, std::string_view v) {
        try {
            get(c) = parse(trim(v));
        } catch (const std::invalid_argument& e) {
            throw ConfigError("config key '" + std::string(k) + "': " + e.what());
        }
    };
}

const std::map<std::string, Setter, std::less<>>& setters()
{
    using C = ExperimentConfig;
    static const std::map<std::string, Setter, std::less<>> table = {
        {"input_size", number<std::size_t>([](C& c) -> auto& { return c.model.backbone.input_size; })},
        {"backbone.channels",
         [](C& c, std::string_view k, std::string_view v) {
             const auto items = split_list(v);
             if (items.size() != 4)
                 throw ConfigError("config key 'backbone.channels': expected four comma-separated widths");
             for (std::size_t i = 0; i < 4; ++i)
                 c.model.backbone.stub_channels[i] = parse_number<std::size_t>(k, items[i]);
         }},
        {"model.variant",
         [](C& c, std::string_view k, std::string_view v) {
             try {
                 c.model = make_variant(trim(v), c.model.backbone).config;
             } catch (const std::invalid_argument& e) {
                 throw ConfigError("config key '" + std::string(k) + "': " + e.what());
             }
         }},
        {"model.low", parsed(parse_enhancer, [](C& c) -> auto& { return c.model.low; })},
        {"model.high", parsed(parse_enhancer, [](C& c) -> auto& { return c.model.high; })},
        {"model.ktm", flag([](C& c) -> auto& { return c.model.ktm; })},
        {"model.ktm_mode", parsed(parse_ktm_mode, [](C& c) -> auto& { return c.model.ktm_mode; })},
        {"model.attention", parsed(parse_attention_variant, [](C& c) -> auto& { return c.model.attention; })},
        {"train.epochs", number<std::size_t>([](C& c) -> auto& { return c.epochs; })},
        {"train.batch_size", number<std::size_t>([](C& c) -> auto& { return c.batch_size; })},
        {"train.lr", number<double>([](C& c) -> auto& { return c.lr; })},
        {"train.lr_decay_factor", number<double>([](C& c) -> auto& { return c.lr_decay_factor; })},
        {"train.lr_decay_period", number<int>([](C& c) -> auto& { return c.lr_decay_period; })},
        {"train.max_iterations", number<std::size_t>([](C& c) -> auto& { return c.max_iterations; })},
        {"train.augment", flag([](C& c) -> auto& { return c.augment; })},
        {"seed", number<std::uint64_t>([](C& c) -> auto& { return c.seed; })},
        {"data.source",
         [](C& c, std::string_view k, std::string_view v) {
             const std::string s = trim(v);
             if (s == "synthetic")
                 c.data_source = DataSource::synthetic;
             else if (s == "manifest")
                 c.data_source = DataSource::manifest;
             else
                 throw ConfigError("config key '" + std::string(k) + "': expected synthetic or manifest");
         }},
        {"data.manifest", [](C& c, std::string_view, std::string_view v) { c.manifest = trim(v); }},
        {"synth.seed", number<std::uint64_t>([](C& c) -> auto& { return c.synth.seed; })},
        {"synth.count", number<std::size_t>([](C& c) -> auto& { return c.synth.count; })},
        {"synth.min_objects", number<std::size_t>([](C& c) -> auto& { return c.synth.min_objects; })},
        {"synth.max_objects", number<std::size_t>([](C& c) -> auto& { return c.synth.max_objects; })},
        {"synth.shapes",
         [](C& c, std::string_view k, std::string_view v) {
             c.synth.rectangles = c.synth.ellipses = c.synth.lines = false;
             for (const std::string& s : split_list(v)) {
                 if (s == "rectangle")
                     c.synth.rectangles = true;
                 else if (s == "ellipse")
                     c.synth.ellipses = true;
                 else if (s == "line")
                     c.synth.lines = true;
                 else
                     throw ConfigError("config key '" + std::string(k) + "': unknown shape '" + s + "'");
             }
         }},
        {"synth.min_extent", number<double>([](C& c) -> auto& { return c.synth.min_extent; })},
        {"synth.max_extent", number<double>([](C& c) -> auto& { return c.synth.max_extent; })},
        {"synth.line_min_half_width", number<double>([](C& c) -> auto& { return c.synth.line_min_half_width; })},
        {"synth.line_max_half_width", number<double>([](C& c) -> auto& { return c.synth.line_max_half_width; })},
        {"synth.low_contrast_fraction", number<double>([](C& c) -> auto& { return c.synth.low_contrast_fraction; })},
        {"synth.high_contrast", number<double>([](C& c) -> auto& { return c.synth.high_contrast; })},
        {"synth.low_contrast", number<double>([](C& c) -> auto& { return c.synth.low_contrast; })},
        {"synth.background_waves", number<std::size_t>([](C& c) -> auto& { return c.synth.background_waves; })},
        {"synth.background_amplitude", number<double>([](C& c) -> auto& { return c.synth.background_amplitude; })},
        {"synth.noise_sigma", number<double>([](C& c) -> auto& { return c.synth.noise_sigma; })},
        {"out_dir", [](C& c, std::string_view, std::string_view v) { c.out_dir = trim(v); }},
        {"gradcheck.tolerance", number<double>([](C& c) -> auto& { return c.gradcheck_tolerance; })},
        {"ablate.variants", [](C& c, std::string_view, std::string_view v) { c.ablate_variants = split_list(v); }},
        {"ablate.seeds", number<std::size_t>([](C& c) -> auto& { return c.ablate_seeds; })},
    };
    return table;
}

void apply_text(ExperimentConfig& cfg, std::string_view text, const std::filesystem::path& origin, int depth);

void apply_include(ExperimentConfig& cfg, const std::string& target, const std::filesystem::path& origin, int depth)
{
    if (depth > 16)
        throw ConfigError("config includes nested too deeply (cycle?) at '" + target + "'");
    const auto names = preset_names();
    if (std::find(names.begin(), names.end(), target) != names.end()) {
        apply_text(cfg, preset_text(target), "<preset:" + target + ">", depth + 1);
        return;
    }
    std::filesystem::path p(target);
    if (p.is_relative() && !origin.empty() && origin.native().front() != '<')
        p = origin.parent_path() / p;
    std::ifstream is(p);
    if (!is)
        throw ConfigError("cannot open config file '" + p.string() + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    apply_text(cfg, ss.str(), p, depth + 1);
}

void apply_text(ExperimentConfig& cfg, std::string_view text, const std::filesystem::path& origin, int depth)
{
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string_view::npos)
            line = line.substr(0, hash);
        const std::string content = trim(line);
        if (content.empty())
            continue;
        const auto eq = content.find('=');
        const std::string where = origin.string() + ":" + std::to_string(line_no) + ": ";
        if (eq == std::string::npos)
            throw ConfigError(where + "expected 'key = value', got '" + content + "'");
        const std::string key = trim(std::string_view(content).substr(0, eq));
        const std::string value = trim(std::string_view(content).substr(eq + 1));
        if (key == "include") {
            apply_include(cfg, value, origin, depth);
            continue;
        }
        try {
            set_config_value(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
}

std::string join_list(const std::vector<std::string>& items)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i)
        out += (i ? "," : "") + items[i];
    return out;
}

} // namespace

void ExperimentConfig::validate() const
{
    try {
        model.backbone.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (input_size() < 64)
        throw ConfigError("input_size must be at least 64, got " + std::to_string(input_size()));
    for (std::size_t c : model.backbone.stub_channels)
        if (c == 0)
            throw ConfigError("backbone.channels must be positive");
    if (batch_size == 0)
        throw ConfigError("train.batch_size must be positive");
    if (!(lr > 0.0))
        throw ConfigError("train.lr must be positive");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
        throw ConfigError("train.lr_decay_factor must lie in (0, 1]");
    if (lr_decay_period <= 0)
        throw ConfigError("train.lr_decay_period must be positive");
    if (data_source == DataSource::manifest && manifest.empty())
        throw ConfigError("data.source = manifest needs data.manifest");
    if (data_source == DataSource::synthetic) {
        SynthConfig s = synth;
        s.size = input_size();
        try {
            s.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (!(gradcheck_tolerance > 0.0))
        throw ConfigError("gradcheck.tolerance must be positive");
    if (ablate_seeds == 0)
        throw ConfigError("ablate.seeds must be positive");
    for (const std::string& v : ablate_variants) {
        try {
            make_variant(v, model.backbone);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
}

std::string_view preset_text(std::string_view name)
{
    if (name == "desk")
        return kDeskPreset;
    if (name == "paper")
        return kPaperPreset;
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected desk or paper)");
}

std::vector<std::string> preset_names() { return {"desk", "paper"}; }

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value)
{
    const auto& table = setters();
    const auto it = table.find(key);
    if (it == table.end())
        throw ConfigError("unknown config key '" + std::string(key) + "'");
    it->second(cfg, key, value);
}

void apply_config_text(ExperimentConfig& cfg, std::string_view text, const std::filesystem::path& origin)
{
    apply_text(cfg, text, origin, 0);
}

void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path)
{
    apply_include(cfg, path.string(), {}, 0);
}

void apply_preset(ExperimentConfig& cfg, std::string_view name)
{
    apply_text(cfg, preset_text(name), "<preset:" + std::string(name) + ">", 0);
}

std::vector<std::string> known_config_keys()
{
    std::vector<std::string> keys{"include"};
    for (const auto& [k, _] : setters())
        keys.push_back(k);
    return keys;
}

std::string dump_config(const ExperimentConfig& c)
{
    std::ostringstream os;
    os.precision(17);
    const auto& b = c.model.backbone;
    os << "input_size = " << b.input_size << '\n'
       << "backbone.channels = " << b.stub_channels[0] << ',' << b.stub_channels[1] << ',' << b.stub_channels[2]
       << ',' << b.stub_channels[3] << '\n'
       << "model.low = " << to_string(c.model.low) << '\n'
       << "model.high = " << to_string(c.model.high) << '\n'
       << "model.ktm = " << (c.model.ktm ? "on" : "off") << '\n'
       << "model.ktm_mode = " << to_string(c.model.ktm_mode) << '\n'
       << "model.attention = " << to_string(c.model.attention) << '\n'
       << "train.epochs = " << c.epochs << '\n'
       << "train.batch_size = " << c.batch_size << '\n'
       << "train.lr = " << c.lr << '\n'
       << "train.lr_decay_factor = " << c.lr_decay_factor << '\n'
       << "train.lr_decay_period = " << c.lr_decay_period << '\n'
       << "train.max_iterations = " << c.max_iterations << '\n'
       << "train.augment = " << (c.augment ? "on" : "off") << '\n'
       << "seed = " << c.seed << '\n'
       << "data.source = " << (c.data_source == DataSource::synthetic ? "synthetic" : "manifest") << '\n';
    if (!c.manifest.empty())
        os << "data.manifest = " << c.manifest.string() << '\n';
    std::vector<std::string> shapes;
    if (c.synth.rectangles) shapes.emplace_back("rectangle");
    if (c.synth.ellipses) shapes.emplace_back("ellipse");
    if (c.synth.lines) shapes.emplace_back("line");
    os << "synth.seed = " << c.synth.seed << '\n'
       << "synth.count = " << c.synth.count << '\n'
       << "synth.min_objects = " << c.synth.min_objects << '\n'
       << "synth.max_objects = " << c.synth.max_objects << '\n'
       << "synth.shapes = " << join_list(shapes) << '\n'
       << "synth.min_extent = " << c.synth.min_extent << '\n'
       << "synth.max_extent = " << c.synth.max_extent << '\n'
       << "synth.line_min_half_width = " << c.synth.line_min_half_width << '\n'
       << "synth.line_max_half_width = " << c.synth.line_max_half_width << '\n'
       << "synth.low_contrast_fraction = " << c.synth.low_contrast_fraction << '\n'
       << "synth.high_contrast = " << c.synth.high_contrast << '\n'
       << "synth.low_contrast = " << c.synth.low_contrast << '\n'
       << "synth.background_waves = " << c.synth.background_waves << '\n'
       << "synth.background_amplitude = " << c.synth.background_amplitude << '\n'
       << "synth.noise_sigma = " << c.synth.noise_sigma << '\n'
       << "out_dir = " << c.out_dir.string() << '\n'
       << "gradcheck.tolerance = " << c.gradcheck_tolerance << '\n';
    if (!c.ablate_variants.empty())
        os << "ablate.variants = " << join_list(c.ablate_variants) << '\n';
    os << "ablate.seeds = " << c.ablate_seeds << '\n';
    return os.str();
}

} // namespace gelenet

// SPDX-License-Identifier: Apache-2.0
//
// dpsim - dual-polarized stacked metasurface HMIMO simulation toolkit
// Copyright (C) 2026 The dpsim authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "dpsim/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dpsim
{

namespace
{

std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::string join(const std::vector<std::string> &items)
{
    std::string out;
    for (const auto &item : items)
    {
        if (!out.empty())
            out += "; ";
        out += item;
    }
    return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value)
{
    throw std::invalid_argument("invalid value '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

double to_double(std::string_view key, std::string_view value)
{
    // std::from_chars for double is missing on older libstdc++, go through strtod
    const std::string v(value);
    char *end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out))
        bad_value(key, value);
    return out;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view value)
{
    Int out{};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size())
        bad_value(key, value);
    return out;
}

std::complex<double> to_complex(std::string_view key, std::string_view value)
{
    std::istringstream in{std::string(value)};
    std::complex<double> out;
    in >> out;
    if (in.fail() || !(in >> std::ws).eof())
        bad_value(key, value);
    return out;
}

std::string fmt_double(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool is_perfect_square(int n)
{
    if (n < 1)
        return false;
    const int root = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    return root * root == n;
}

} // namespace

std::string to_string(StackMode mode)
{
    return mode == StackMode::dual_polarized ? "dual_polarized" : "tied_sim_baseline";
}

std::string to_string(CorrelationPlacement placement)
{
    return placement == CorrelationPlacement::block_diagonal ? "block_diagonal" : "all_blocks";
}

double dbm_to_watt(double dbm)
{
    return std::pow(10.0, (dbm - 30.0) / 10.0);
}

double watt_to_dbm(double watt)
{
    return 10.0 * std::log10(watt) + 30.0;
}

double SystemConfig::wavelength() const
{
    return wavelength_override ? *wavelength_override : speed_of_light / carrier_frequency;
}

double SystemConfig::unit_spacing() const
{
    return unit_spacing_override ? *unit_spacing_override : wavelength() / 2.0;
}

ConfigParseError::ConfigParseError(int line, const std::string &what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line)
{
}

ConfigValidationError::ConfigValidationError(std::vector<std::string> violations)
    : std::runtime_error("invalid configuration: " + join(violations)), violations_(std::move(violations))
{
}

Config default_config()
{
    return Config{};
}

const std::vector<std::string> &config_keys()
{
    static const std::vector<std::string> keys = {
        "streams_per_pol", "tx_layers", "rx_layers", "tx_units_per_layer", "rx_units_per_layer",
        "unit_spacing", "tx_thickness", "rx_thickness", "link_distance", "transmit_power",
        "noise_power", "carrier_frequency", "wavelength", "pol_conversion_ratio",
        "pathloss_ref_distance", "pathloss_exponent", "shadowing_std", "stack_mode",
        "correlation_placement", "init_candidates", "max_epochs", "initial_lr", "decay",
        "monte_carlo_trials", "initial_alpha", "master_seed"};
    return keys;
}

void set_config_value(Config &cfg, std::string_view key, std::string_view value)
{
    auto &s = cfg.sys;
    auto &a = cfg.algo;
    if (key == "streams_per_pol")
        s.streams_per_pol = to_int<int>(key, value);
    else if (key == "tx_layers")
        s.tx_layers = to_int<int>(key, value);
    else if (key == "rx_layers")
        s.rx_layers = to_int<int>(key, value);
    else if (key == "tx_units_per_layer")
        s.tx_units_per_layer = to_int<int>(key, value);
    else if (key == "rx_units_per_layer")
        s.rx_units_per_layer = to_int<int>(key, value);
    else if (key == "unit_spacing")
        s.unit_spacing_override = to_double(key, value);
    else if (key == "tx_thickness")
        s.tx_thickness = to_double(key, value);
    else if (key == "rx_thickness")
        s.rx_thickness = to_double(key, value);
    else if (key == "link_distance")
        s.link_distance = to_double(key, value);
    else if (key == "transmit_power")
        s.transmit_power_dbm = to_double(key, value);
    else if (key == "noise_power")
        s.noise_power_dbm = to_double(key, value);
    else if (key == "carrier_frequency")
        s.carrier_frequency = to_double(key, value);
    else if (key == "wavelength")
        s.wavelength_override = to_double(key, value);
    else if (key == "pol_conversion_ratio")
        s.pol_conversion_ratio = to_double(key, value);
    else if (key == "pathloss_ref_distance")
        s.pathloss_ref_distance = to_double(key, value);
    else if (key == "pathloss_exponent")
        s.pathloss_exponent = to_double(key, value);
    else if (key == "shadowing_std")
        s.shadowing_std = to_double(key, value);
    else if (key == "stack_mode")
    {
        if (value == "dual_polarized")
            s.stack_mode = StackMode::dual_polarized;
        else if (value == "tied_sim_baseline")
            s.stack_mode = StackMode::tied_sim_baseline;
        else
            bad_value(key, value);
    }
    else if (key == "correlation_placement")
    {
        if (value == "block_diagonal")
            s.correlation_placement = CorrelationPlacement::block_diagonal;
        else if (value == "all_blocks")
            s.correlation_placement = CorrelationPlacement::all_blocks;
        else
            bad_value(key, value);
    }
    else if (key == "init_candidates")
        a.init_candidates = to_int<int>(key, value);
    else if (key == "max_epochs")
        a.max_epochs = to_int<int>(key, value);
    else if (key == "initial_lr")
        a.initial_lr = to_double(key, value);
    else if (key == "decay")
        a.decay = to_double(key, value);
    else if (key == "monte_carlo_trials")
        a.monte_carlo_trials = to_int<int>(key, value);
    else if (key == "initial_alpha")
        a.initial_alpha = to_complex(key, value);
    else if (key == "master_seed")
        a.master_seed = to_int<std::uint64_t>(key, value);
    else
        throw std::invalid_argument("unknown key '" + std::string(key) + "'");
}

Config parse_config(std::string_view text)
{
    Config cfg = default_config();
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size())
    {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;

        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        const std::string content = trim(line);
        if (content.empty())
            continue;

        const auto eq = content.find('=');
        if (eq == std::string::npos)
            throw ConfigParseError(line_no, "expected 'key = value'");
        const std::string key = trim(std::string_view(content).substr(0, eq));
        const std::string value = trim(std::string_view(content).substr(eq + 1));
        if (key.empty())
            throw ConfigParseError(line_no, "missing key");
        if (value.empty())
            throw ConfigParseError(line_no, "missing value for '" + key + "'");
        try
        {
            set_config_value(cfg, key, value);
        }
        catch (const std::invalid_argument &e)
        {
            throw ConfigParseError(line_no, e.what());
        }
    }
    validate(cfg);
    return cfg;
}

Config load_config(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::vector<std::string> check(const SystemConfig &s, const AlgoConfig &a)
{
    std::vector<std::string> errors;
    auto require = [&](bool ok, const char *message) {
        if (!ok)
            errors.emplace_back(message);
    };

    require(s.streams_per_pol >= 1, "streams_per_pol must be positive");
    require(s.tx_layers >= 1, "tx_layers must be positive");
    require(s.rx_layers >= 1, "rx_layers must be positive");
    require(is_perfect_square(s.tx_units_per_layer), "tx_units_per_layer must be a perfect square");
    require(is_perfect_square(s.rx_units_per_layer), "rx_units_per_layer must be a perfect square");
    require(s.tx_units_per_layer >= s.streams_per_pol, "M ≥ S violated (tx_units_per_layer < streams_per_pol)");
    require(s.rx_units_per_layer >= s.streams_per_pol, "N ≥ S violated (rx_units_per_layer < streams_per_pol)");
    require(!s.unit_spacing_override || *s.unit_spacing_override > 0.0, "unit_spacing must be positive");
    require(s.tx_thickness > 0.0, "tx_thickness must be positive");
    require(s.rx_thickness > 0.0, "rx_thickness must be positive");
    require(s.link_distance > 0.0, "link_distance must be positive");
    require(s.carrier_frequency > 0.0, "carrier_frequency must be positive");
    require(!s.wavelength_override || *s.wavelength_override > 0.0, "wavelength must be positive");
    require(s.pol_conversion_ratio >= 0.0 && s.pol_conversion_ratio <= 1.0, "pol_conversion_ratio out of [0,1]");
    require(s.pathloss_ref_distance > 0.0, "pathloss_ref_distance must be positive");
    require(s.link_distance >= s.pathloss_ref_distance, "link_distance must not be below pathloss_ref_distance");
    require(s.pathloss_exponent > 0.0, "pathloss_exponent must be positive");
    require(s.shadowing_std >= 0.0, "shadowing_std must be nonnegative");

    require(a.init_candidates >= 1, "init_candidates must be at least 1");
    require(a.max_epochs >= 1, "max_epochs must be at least 1");
    require(a.initial_lr > 0.0, "initial_lr must be positive");
    require(a.decay > 0.0 && a.decay < 1.0, "decay out of (0,1)");
    require(a.monte_carlo_trials >= 1, "monte_carlo_trials must be positive");
    require(std::isfinite(a.initial_alpha.real()) && std::isfinite(a.initial_alpha.imag()),
            "initial_alpha must be finite");
    return errors;
}

const Config &validate(const Config &cfg)
{
    if (auto errors = check(cfg.sys, cfg.algo); !errors.empty())
        throw ConfigValidationError(std::move(errors));
    return cfg;
}

std::string render_config(const Config &cfg)
{
    const auto &s = cfg.sys;
    const auto &a = cfg.algo;
    std::ostringstream out;
    out << "# system\n";
    out << "streams_per_pol = " << s.streams_per_pol << '\n';
    out << "tx_layers = " << s.tx_layers << '\n';
    out << "rx_layers = " << s.rx_layers << '\n';
    out << "tx_units_per_layer = " << s.tx_units_per_layer << '\n';
    out << "rx_units_per_layer = " << s.rx_units_per_layer << '\n';
    if (s.unit_spacing_override)
        out << "unit_spacing = " << fmt_double(*s.unit_spacing_override) << '\n';
    out << "tx_thickness = " << fmt_double(s.tx_thickness) << '\n';
    out << "rx_thickness = " << fmt_double(s.rx_thickness) << '\n';
    out << "link_distance = " << fmt_double(s.link_distance) << '\n';
    out << "transmit_power = " << fmt_double(s.transmit_power_dbm) << "  # dBm\n";
    out << "noise_power = " << fmt_double(s.noise_power_dbm) << "  # dBm\n";
    out << "carrier_frequency = " << fmt_double(s.carrier_frequency) << '\n';
    if (s.wavelength_override)
        out << "wavelength = " << fmt_double(*s.wavelength_override) << '\n';
    out << "pol_conversion_ratio = " << fmt_double(s.pol_conversion_ratio) << '\n';
    out << "pathloss_ref_distance = " << fmt_double(s.pathloss_ref_distance) << '\n';
    out << "pathloss_exponent = " << fmt_double(s.pathloss_exponent) << '\n';
    out << "shadowing_std = " << fmt_double(s.shadowing_std) << '\n';
    out << "stack_mode = " << to_string(s.stack_mode) << '\n';
    out << "correlation_placement = " << to_string(s.correlation_placement) << '\n';
    out << "# algorithm\n";
    out << "init_candidates = " << a.init_candidates << '\n';
    out << "max_epochs = " << a.max_epochs << '\n';
    out << "initial_lr = " << fmt_double(a.initial_lr) << '\n';
    out << "decay = " << fmt_double(a.decay) << '\n';
    out << "monte_carlo_trials = " << a.monte_carlo_trials << '\n';
    out << "initial_alpha = (" << fmt_double(a.initial_alpha.real()) << ',' << fmt_double(a.initial_alpha.imag())
        << ")\n";
    out << "master_seed = " << a.master_seed << '\n';
    return out.str();
}

} // namespace dpsim

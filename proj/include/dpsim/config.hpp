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

#ifndef DPSIM_CONFIG_HPP
#define DPSIM_CONFIG_HPP

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dpsim
{

inline constexpr double speed_of_light = 299792458.0; // m/s

enum class StackMode
{
    dual_polarized,    // independent phases per polarization
    tied_sim_baseline  // both polarizations share one phase per unit
};

enum class CorrelationPlacement
{
    block_diagonal, // diag(R^1/2, R^1/2) per polarization
    all_blocks     // every 2x2 block carries R^1/2
};

std::string to_string(StackMode mode);
std::string to_string(CorrelationPlacement placement);

double dbm_to_watt(double dbm);
double watt_to_dbm(double watt);

// Link, metasurface and channel parameters.
// Powers are configured in dBm; use the *_w() accessors for linear values.
struct SystemConfig
{
    int streams_per_pol = 3;     // S, total streams 2S
    int tx_layers = 3;           // L
    int rx_layers = 3;           // K
    int tx_units_per_layer = 100; // M, perfect square
    int rx_units_per_layer = 100; // N, perfect square
    std::optional<double> unit_spacing_override; // r_DPEM [m]
    double tx_thickness = 0.05;  // D_tx [m]
    double rx_thickness = 0.05;  // D_rx [m]
    double link_distance = 250.0; // d [m]
    double transmit_power_dbm = 20.0;
    double noise_power_dbm = -110.0;
    double carrier_frequency = 28e9; // f [Hz]
    std::optional<double> wavelength_override; // lambda [m]
    double pol_conversion_ratio = 0.2; // epsilon
    double pathloss_ref_distance = 1.0; // d0 [m]
    double pathloss_exponent = 3.5;     // b
    double shadowing_std = 9.0;         // delta [dB]
    StackMode stack_mode = StackMode::dual_polarized;
    CorrelationPlacement correlation_placement = CorrelationPlacement::block_diagonal;

    int streams() const { return 2 * streams_per_pol; }
    // c/f unless overridden.
    double wavelength() const;
    // lambda/2 unless overridden.
    double unit_spacing() const;
    double tx_layer_spacing() const { return tx_thickness / tx_layers; }
    double rx_layer_spacing() const { return rx_thickness / rx_layers; }
    double transmit_power_w() const { return dbm_to_watt(transmit_power_dbm); }
    double noise_power_w() const { return dbm_to_watt(noise_power_dbm); }

    bool operator==(const SystemConfig &) const = default;
};

struct AlgoConfig
{
    int init_candidates = 100; // varsigma
    int max_epochs = 20;       // E^max
    double initial_lr = 0.1;   // eta_0
    double decay = 0.5;        // beta
    int monte_carlo_trials = 100;
    std::complex<double> initial_alpha{1.0, 0.0};
    std::uint64_t master_seed = 1;

    bool operator==(const AlgoConfig &) const = default;
};

struct Config
{
    SystemConfig sys;
    AlgoConfig algo;

    bool operator==(const Config &) const = default;
};

// Syntax error in a configuration document; line() is 1-based.
class ConfigParseError : public std::runtime_error
{
public:
    ConfigParseError(int line, const std::string &what);
    int line() const { return line_; }

private:
    int line_;
};

// One or more violated invariants, all collected.
class ConfigValidationError : public std::runtime_error
{
public:
    explicit ConfigValidationError(std::vector<std::string> violations);
    const std::vector<std::string> &violations() const { return violations_; }

private:
    std::vector<std::string> violations_;
};

Config default_config();

// Parses `key = value` lines ('#' starts a comment). Omitted keys keep their
// defaults. The result is validated.
Config parse_config(std::string_view text);
Config load_config(const std::string &path);

// Sets one key from its textual value. Does not validate.
void set_config_value(Config &cfg, std::string_view key, std::string_view value);

// Lists every violated invariant (empty when valid).
std::vector<std::string> check(const SystemConfig &sys, const AlgoConfig &algo);

// Throws ConfigValidationError if check() reports anything.
const Config &validate(const Config &cfg);

// Renders every key so that parse_config(render_config(c)) == c.
std::string render_config(const Config &cfg);

// Names of all recognized keys, in render order.
const std::vector<std::string> &config_keys();

} // namespace dpsim

#endif

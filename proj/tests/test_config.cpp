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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>

using namespace dpsim;

namespace
{

bool mentions(const std::vector<std::string> &errors, const std::string &needle)
{
    return std::any_of(errors.begin(), errors.end(),
                       [&](const std::string &e) { return e.find(needle) != std::string::npos; });
}

} // namespace

TEST_CASE("reference document parses to the reference parameter set")
{
    const Config cfg = parse_config(R"(# reference parameters
streams_per_pol = 3
tx_layers = 3
rx_layers = 3
tx_units_per_layer = 100
rx_units_per_layer = 100
carrier_frequency = 28e9
transmit_power = 20
noise_power = -110
pol_conversion_ratio = 0.2
init_candidates = 100
max_epochs = 20
initial_lr = 0.1
decay = 0.5
)");
    CHECK(cfg.sys.streams_per_pol == 3);
    CHECK(cfg.sys.streams() == 6);
    CHECK(cfg.sys.tx_layer_spacing() == doctest::Approx(0.05 / 3).epsilon(1e-15));
    CHECK(cfg.sys.transmit_power_w() == 0.1);
    CHECK(cfg.sys.noise_power_w() == doctest::Approx(1e-14).epsilon(1e-12));
    CHECK(cfg.sys.wavelength() == doctest::Approx(299792458.0 / 28e9).epsilon(1e-15));
    CHECK(cfg.sys.unit_spacing() == doctest::Approx(cfg.sys.wavelength() / 2).epsilon(1e-15));
    CHECK(cfg == default_config());
    CHECK_NOTHROW(validate(cfg));
}

TEST_CASE("empty document yields defaults")
{
    CHECK(parse_config("") == default_config());
    CHECK(parse_config("\n  # only a comment\n\n") == default_config());
}

TEST_CASE("dBm conversion")
{
    CHECK(dbm_to_watt(20.0) == 0.1);
    CHECK(dbm_to_watt(30.0) == 1.0);
    CHECK(watt_to_dbm(dbm_to_watt(-110.0)) == doctest::Approx(-110.0));
}

TEST_CASE("out-of-range conversion ratio is a validation error")
{
    try
    {
        validate(parse_config("pol_conversion_ratio = 1.3\n"));
        FAIL("expected ConfigValidationError");
    }
    catch (const ConfigValidationError &e)
    {
        CHECK(mentions(e.violations(), "pol_conversion_ratio out of [0,1]"));
    }
}

TEST_CASE("validation collects every violation")
{
    Config cfg = default_config();
    CHECK(check(cfg.sys, cfg.algo).empty());

    cfg.sys.tx_units_per_layer = 2;
    auto errors = check(cfg.sys, cfg.algo);
    CHECK(mentions(errors, "units_per_layer must be a perfect square"));

    cfg = default_config();
    cfg.sys.rx_units_per_layer = 1;
    cfg.sys.streams_per_pol = 3;
    errors = check(cfg.sys, cfg.algo);
    CHECK(mentions(errors, "N ≥ S violated"));

    cfg = default_config();
    cfg.sys.rx_units_per_layer = 2;
    cfg.algo.decay = 1.0;
    cfg.sys.pol_conversion_ratio = -0.1;
    errors = check(cfg.sys, cfg.algo);
    CHECK(errors.size() >= 4);
    CHECK(mentions(errors, "decay out of (0,1)"));
    CHECK(mentions(errors, "pol_conversion_ratio out of [0,1]"));
}

TEST_CASE("validation rejects non-positive lengths and counts")
{
    Config cfg = default_config();
    cfg.sys.tx_thickness = 0.0;
    cfg.sys.link_distance = -1.0;
    cfg.algo.max_epochs = 0;
    cfg.algo.init_candidates = 0;
    const auto errors = check(cfg.sys, cfg.algo);
    CHECK(errors.size() >= 4);
    CHECK_THROWS_AS(validate(cfg), ConfigValidationError);
}

TEST_CASE("parse errors carry the line number")
{
    try
    {
        parse_config("tx_layers = 2\n\nbogus_key = 3\n");
        FAIL("expected ConfigParseError");
    }
    catch (const ConfigParseError &e)
    {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("tx_layers 2\n"), ConfigParseError);
    CHECK_THROWS_AS(parse_config("tx_layers = two\n"), ConfigParseError);
    CHECK_THROWS_AS(parse_config("stack_mode = sideways\n"), ConfigParseError);
}

TEST_CASE("render and parse round-trip exactly")
{
    Config cfg = default_config();
    cfg.sys.streams_per_pol = 2;
    cfg.sys.tx_units_per_layer = 36;
    cfg.sys.rx_units_per_layer = 49;
    cfg.sys.transmit_power_dbm = 17.3;
    cfg.sys.pol_conversion_ratio = 0.1 + 0.2;
    cfg.sys.wavelength_override = 10.7e-3;
    cfg.sys.unit_spacing_override = 5.35e-3;
    cfg.sys.stack_mode = StackMode::tied_sim_baseline;
    cfg.sys.correlation_placement = CorrelationPlacement::all_blocks;
    cfg.algo.initial_alpha = {0.25, -1.0 / 3.0};
    cfg.algo.master_seed = 18446744073709551615ull;
    const Config back = parse_config(render_config(cfg));
    CHECK(back == cfg);
    CHECK(parse_config(render_config(default_config())) == default_config());
}

TEST_CASE("wavelength override is authoritative")
{
    const Config cfg = parse_config("wavelength = 10.7e-3\n");
    CHECK(cfg.sys.wavelength() == 10.7e-3);
    CHECK(cfg.sys.unit_spacing() == 10.7e-3 / 2);
}

TEST_CASE("every advertised key is settable")
{
    Config cfg = default_config();
    for (const auto &key : config_keys())
    {
        const std::string value = key == "stack_mode"              ? "dual_polarized"
                                  : key == "correlation_placement" ? "block_diagonal"
                                  : key == "initial_alpha"         ? "(1,0)"
                                  : key == "decay"                 ? "0.5"
                                  : key == "pol_conversion_ratio"  ? "0.2"
                                                                   : "4";
        CHECK_NOTHROW(set_config_value(cfg, key, value));
    }
    CHECK_THROWS_AS(set_config_value(cfg, "no_such_key", "1"), std::invalid_argument);
}

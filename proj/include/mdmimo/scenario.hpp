// SPDX-License-Identifier: Apache-2.0
//
// mdmimo-sim: Monte-Carlo simulator for mobile distributed MIMO networks
// Copyright (C) 2026 The mdmimo-sim Authors
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

#ifndef mdmimo_scenario_H
#define mdmimo_scenario_H

#include "mdmimo/seeding.hpp"
#include "mdmimo/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mdmimo
{

using Vec3 = Eigen::Vector3d;

enum class NodeKind
{
    Gnb,
    Ru,
    Ue
};

struct NodeSpec
{
    int id = 0;
    NodeKind kind = NodeKind::Ue;
    int num_antennas = 1;
    double tx_power_dbm = 23.0;
    Vec3 position_m = Vec3::Zero();
    Vec3 velocity_mps = Vec3::Zero();
};

struct OfdmConfig
{
    double fc_hz = 3.5e9;
    double scs_hz = 15e3;
    int num_subcarriers = 512;
    int symbols_per_slot = 14;

    double bandwidth_hz() const { return scs_hz * num_subcarriers; }
    double symbol_duration_s() const { return 1.0 / scs_hz; }
    double slot_duration_s() const { return symbols_per_slot / scs_hz; }
};

enum class MobilityLabel
{
    Low,
    Medium,
    High,
    Custom
};

struct MobilityProfile
{
    MobilityLabel label = MobilityLabel::Low;
    double gnb_speed_kmh = 0.1;
    double ue_relative_speed_kmh = 0.01;

    // Ground speed of the gNB and UE speed relative to it for the three named scenarios.
    static MobilityProfile named(MobilityLabel label)
    {
        switch (label)
        {
        case MobilityLabel::Low:
            return {label, 0.1, 0.01};
        case MobilityLabel::Medium:
            return {label, 3.0, 0.3};
        case MobilityLabel::High:
            return {label, 10.0, 1.0};
        case MobilityLabel::Custom:
            break;
        }
        throw std::invalid_argument("Custom mobility has no named speeds.");
    }

    static MobilityProfile custom(double gnb_speed_kmh, double ue_relative_speed_kmh)
    {
        return {MobilityLabel::Custom, gnb_speed_kmh, ue_relative_speed_kmh};
    }
};

inline std::string_view to_string(MobilityLabel l)
{
    switch (l)
    {
    case MobilityLabel::Low:
        return "low";
    case MobilityLabel::Medium:
        return "medium";
    case MobilityLabel::High:
        return "high";
    case MobilityLabel::Custom:
        return "custom";
    }
    return "custom";
}

inline MobilityLabel parse_mobility_label(std::string_view s)
{
    if (s == "low" || s == "Low")
        return MobilityLabel::Low;
    if (s == "medium" || s == "Medium")
        return MobilityLabel::Medium;
    if (s == "high" || s == "High")
        return MobilityLabel::High;
    if (s == "custom" || s == "Custom")
        return MobilityLabel::Custom;
    throw std::invalid_argument("Unknown mobility label '" + std::string(s) + "'.");
}

struct Scenario
{
    std::vector<NodeSpec> nodes;
    OfdmConfig ofdm;
    MobilityProfile mobility;
    double noise_figure_db = 7.0;
    std::uint64_t seed = 1;
    int duration_slots = 1;

    const NodeSpec &node(int id) const
    {
        auto it = std::find_if(nodes.begin(), nodes.end(), [id](const NodeSpec &n) { return n.id == id; });
        if (it == nodes.end())
            throw std::out_of_range("No node with id " + std::to_string(id) + ".");
        return *it;
    }

    const NodeSpec &gnb() const
    {
        for (const auto &n : nodes)
            if (n.kind == NodeKind::Gnb)
                return n;
        throw std::logic_error("Scenario has no gNB.");
    }

    std::vector<NodeSpec> of_kind(NodeKind k) const
    {
        std::vector<NodeSpec> out;
        for (const auto &n : nodes)
            if (n.kind == k)
                out.push_back(n);
        return out;
    }

    std::vector<NodeSpec> rus() const { return of_kind(NodeKind::Ru); }
    std::vector<NodeSpec> ues() const { return of_kind(NodeKind::Ue); }

    // Thermal noise over the full OFDM bandwidth plus receiver noise figure.
    double noise_power_dbm() const
    {
        return -174.0 + 10.0 * std::log10(ofdm.bandwidth_hz()) + noise_figure_db;
    }
};

// Returns one description per broken invariant; empty when the scenario is valid.
inline std::vector<std::string> validate(const Scenario &s)
{
    std::vector<std::string> out;

    int n_gnb = 0, n_ue = 0;
    std::set<int> ids;
    for (std::size_t i = 0; i < s.nodes.size(); ++i)
    {
        const auto &n = s.nodes[i];
        const std::string field = "nodes[" + std::to_string(i) + "]";
        if (n.kind == NodeKind::Gnb)
            ++n_gnb;
        if (n.kind == NodeKind::Ue)
            ++n_ue;
        if (!ids.insert(n.id).second)
            out.push_back(field + ".id: duplicate node id " + std::to_string(n.id));
        if (n.num_antennas < 1)
            out.push_back(field + ".num_antennas: must be >= 1");
        if (!(n.tx_power_dbm >= -10.0 && n.tx_power_dbm <= 50.0))
            out.push_back(field + ".tx_power_dbm: must lie in [-10, 50] dBm");
        if (!n.position_m.allFinite() || !n.velocity_mps.allFinite())
            out.push_back(field + ".position_m/velocity_mps: must be finite");
    }
    if (n_ue == 0)
        out.push_back("at least one UE required");
    if (n_gnb != 1)
        out.push_back("exactly one gNB");

    if (!(s.ofdm.fc_hz > 0.0))
        out.push_back("ofdm.fc_hz: must be > 0");
    if (!(s.ofdm.bandwidth_hz() > 0.0) || s.ofdm.num_subcarriers < 1)
        out.push_back("ofdm.bandwidth_hz: scs_hz * num_subcarriers must be > 0");
    if (s.ofdm.symbols_per_slot < 1)
        out.push_back("ofdm.symbols_per_slot: must be >= 1");

    const auto &m = s.mobility;
    if (!(m.gnb_speed_kmh >= 0.0) || !(m.ue_relative_speed_kmh >= 0.0))
        out.push_back("mobility: speeds must be >= 0");
    if (m.label != MobilityLabel::Custom)
    {
        const auto ref = MobilityProfile::named(m.label);
        if (ref.gnb_speed_kmh != m.gnb_speed_kmh || ref.ue_relative_speed_kmh != m.ue_relative_speed_kmh)
            out.push_back("mobility: speeds must match the named profile '" + std::string(to_string(m.label)) + "'");
    }

    if (s.duration_slots < 1)
        out.push_back("duration_slots: must be >= 1");
    return out;
}

// Classical narrowband Doppler shift f_d = v * f_c / c.
inline double doppler_hz(double speed_mps, double fc_hz)
{
    if (speed_mps < 0.0)
        throw std::invalid_argument("Speed cannot be negative.");
    if (!(fc_hz > 0.0))
        throw std::invalid_argument("Carrier frequency must be positive.");
    return speed_mps * fc_hz / speed_of_light_mps;
}

inline Scenario advance_positions(Scenario s, double dt_s)
{
    if (dt_s < 0.0)
        throw std::invalid_argument("Time step cannot be negative.");
    for (auto &n : s.nodes)
        n.position_m += n.velocity_mps * dt_s;
    return s;
}

// ---------- Scenario generation ----------

enum class RuAnchor
{
    Gnb, // RUs scattered around the gNB
    Ue   // RUs scattered around the UE cluster
};

// Parametric layout from which per-trial scenarios are drawn. Node ids are fixed:
// gNB = 0, UEs = 1..num_ues, RUs = ru_id_base + 0..num_rus-1, so nested RU or UE
// sweeps reuse the same random streams for the nodes they share.
struct Layout
{
    static constexpr int ru_id_base = 1001;

    int gnb_antennas = 4;
    double gnb_power_dbm = 35.0;
    int num_rus = 4;
    int ru_antennas = 2;
    double ru_power_dbm = 26.0;
    int num_ues = 2;
    int ue_antennas = 2;
    double ue_power_dbm = 23.0;

    double ue_distance_m = 250.0;      // gNB to UE-cluster center
    double ue_cluster_radius_m = 20.0; // UEs uniform in this disk
    RuAnchor ru_anchor = RuAnchor::Gnb;
    double ru_min_radius_m = 10.0;
    double ru_max_radius_m = 50.0;
    double antenna_height_m = 1.5;

    OfdmConfig ofdm;
    MobilityProfile mobility;
    double noise_figure_db = 7.0;
    int duration_slots = 1;
};

namespace detail
{
inline Vec3 uniform_in_annulus(Rng &rng, const Vec3 &center, double r_min, double r_max)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = std::sqrt(r_min * r_min + u(rng) * (r_max * r_max - r_min * r_min));
    const double phi = two_pi * u(rng);
    return center + Vec3(r * std::cos(phi), r * std::sin(phi), 0.0);
}

inline Vec3 random_heading(Rng &rng)
{
    std::uniform_real_distribution<double> u(0.0, two_pi);
    const double phi = u(rng);
    return {std::cos(phi), std::sin(phi), 0.0};
}
} // namespace detail

// Draws node positions and headings for one trial from `seed`. RUs travel with the
// gNB (common ground velocity); each UE moves relative to the gNB on its own heading.
inline Scenario build_scenario(const Layout &l, std::uint64_t seed)
{
    Scenario s;
    s.ofdm = l.ofdm;
    s.mobility = l.mobility;
    s.noise_figure_db = l.noise_figure_db;
    s.seed = seed;
    s.duration_slots = l.duration_slots;

    const double h = l.antenna_height_m;
    Rng heading_rng(derive_seed(seed, {tag(StreamTag::heading), 0}));
    const Vec3 gnb_velocity = kmh_to_mps(l.mobility.gnb_speed_kmh) * detail::random_heading(heading_rng);

    s.nodes.push_back({0, NodeKind::Gnb, l.gnb_antennas, l.gnb_power_dbm, Vec3(0.0, 0.0, h), gnb_velocity});

    const Vec3 ue_center(l.ue_distance_m, 0.0, h);
    for (int u = 0; u < l.num_ues; ++u)
    {
        const int id = 1 + u;
        Rng pos(derive_seed(seed, {tag(StreamTag::position), static_cast<std::uint64_t>(id)}));
        Rng head(derive_seed(seed, {tag(StreamTag::heading), static_cast<std::uint64_t>(id)}));
        const Vec3 p = detail::uniform_in_annulus(pos, ue_center, 0.0, l.ue_cluster_radius_m);
        const Vec3 v = gnb_velocity + kmh_to_mps(l.mobility.ue_relative_speed_kmh) * detail::random_heading(head);
        s.nodes.push_back({id, NodeKind::Ue, l.ue_antennas, l.ue_power_dbm, p, v});
    }

    const Vec3 ru_center = l.ru_anchor == RuAnchor::Gnb ? Vec3(0.0, 0.0, h) : ue_center;
    for (int r = 0; r < l.num_rus; ++r)
    {
        const int id = Layout::ru_id_base + r;
        Rng pos(derive_seed(seed, {tag(StreamTag::position), static_cast<std::uint64_t>(id)}));
        const Vec3 p = detail::uniform_in_annulus(pos, ru_center, l.ru_min_radius_m, l.ru_max_radius_m);
        s.nodes.push_back({id, NodeKind::Ru, l.ru_antennas, l.ru_power_dbm, p, gnb_velocity});
    }
    return s;
}

} // namespace mdmimo

#endif

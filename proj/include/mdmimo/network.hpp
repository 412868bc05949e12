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

#ifndef mdmimo_network_H
#define mdmimo_network_H

#include "mdmimo/channel.hpp"
#include "mdmimo/mimo.hpp"
#include "mdmimo/scenario.hpp"

#include <vector>

namespace mdmimo
{

using GroupChannels = std::vector<CMatrix>; // one matrix per subcarrier group

// All links between a set of transmit nodes and a set of receive nodes.
struct LinkGrid
{
    std::vector<int> tx_ids;
    std::vector<int> rx_ids;
    std::vector<int> tx_antennas;
    std::vector<int> rx_antennas;
    std::vector<LinkState> links; // [rx * tx_ids.size() + tx]

    const LinkState &link(std::size_t rx, std::size_t tx) const { return links[rx * tx_ids.size() + tx]; }
};

inline LinkGrid make_link_grid(const Scenario &s, const std::vector<int> &tx_ids, const std::vector<int> &rx_ids,
                               const ChannelOptions &opt)
{
    LinkGrid g;
    g.tx_ids = tx_ids;
    g.rx_ids = rx_ids;
    for (int id : tx_ids)
        g.tx_antennas.push_back(s.node(id).num_antennas);
    for (int id : rx_ids)
        g.rx_antennas.push_back(s.node(id).num_antennas);
    g.links.reserve(tx_ids.size() * rx_ids.size());
    for (int rx : rx_ids)
        for (int tx : tx_ids)
            g.links.push_back(make_link(s, tx, rx, opt));
    return g;
}

// Sampled channels of every link of a grid: samples[link][time][group].
struct GridTrajectory
{
    std::size_t n_rx = 0, n_tx = 0;
    std::vector<double> times_s;
    std::vector<std::vector<GroupChannels>> samples;

    const GroupChannels &at(std::size_t rx, std::size_t tx, std::size_t time) const
    {
        return samples[rx * n_tx + tx][time];
    }
    GroupChannels &at(std::size_t rx, std::size_t tx, std::size_t time) { return samples[rx * n_tx + tx][time]; }

    std::size_t num_groups() const { return samples.empty() || samples[0].empty() ? 0 : samples[0][0].size(); }

    // Channel from all transmitters to one receiver, columns in transmitter order.
    CMatrix rx_block(std::size_t rx, std::size_t time, std::size_t group) const
    {
        Eigen::Index cols = 0;
        for (std::size_t tx = 0; tx < n_tx; ++tx)
            cols += at(rx, tx, time)[group].cols();
        CMatrix h(at(rx, 0, time)[group].rows(), cols);
        Eigen::Index c = 0;
        for (std::size_t tx = 0; tx < n_tx; ++tx)
        {
            const auto &b = at(rx, tx, time)[group];
            h.middleCols(c, b.cols()) = b;
            c += b.cols();
        }
        return h;
    }
};

inline GridTrajectory sample_grid(const LinkGrid &g, const std::vector<double> &times_s, const ChannelOptions &opt)
{
    GridTrajectory t;
    t.n_rx = g.rx_ids.size();
    t.n_tx = g.tx_ids.size();
    t.times_s = times_s;
    t.samples.reserve(g.links.size());
    for (const auto &l : g.links)
        t.samples.push_back(sample_trajectory(l, times_s, opt));
    return t;
}

inline CompositeChannel composite_at(const GridTrajectory &t, const std::vector<int> &tx_antennas, std::size_t time,
                                     std::size_t group)
{
    CompositeChannel c;
    c.node_antennas = tx_antennas;
    for (std::size_t rx = 0; rx < t.n_rx; ++rx)
        c.per_ue_blocks.push_back(t.rx_block(rx, time, group));
    return c;
}

} // namespace mdmimo

#endif

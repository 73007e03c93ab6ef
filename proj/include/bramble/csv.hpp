#pragma once

#include "bramble/dlo_model.hpp"
#include "bramble/executor.hpp"
#include "bramble/planner.hpp"
#include "bramble/safety_map.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace bramble::csv {

/// Fixed, locale-independent formatting so identical values always produce
/// identical bytes.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string fmt(int v) { return std::to_string(v); }

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    return out;
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

/// Discretized curve: s,theta,x,z
inline void write_curve(const std::string& path, const ShapeSolution& sol) {
    auto out = open_out(path);
    out << "s,theta,x,z\n";
    for (int j = 0; j < sol.s_grid.size(); ++j)
        out << fmt(sol.s_grid[j]) << ',' << fmt(sol.theta[j]) << ','
            << fmt(sol.positions[j].x()) << ',' << fmt(sol.positions[j].y()) << '\n';
}

/// Safety map samples: x,z,label
inline void write_safety_map(const std::string& path, const SafetyMap& map) {
    auto out = open_out(path);
    out << "x,z,label\n";
    for (const auto& s : map.samples)
        out << fmt(s.x) << ',' << fmt(s.z) << ',' << to_string(s.label) << '\n';
}

/// Way-point path: idx,x,y,z,qw,qx,qy,qz,cum_length
inline void write_path(const std::string& path, const PlanPath& plan) {
    auto out = open_out(path);
    out << "idx,x,y,z,qw,qx,qy,qz,cum_length\n";
    for (std::size_t i = 0; i < plan.waypoints.size(); ++i) {
        const auto& wp = plan.waypoints[i];
        out << i << ',' << fmt(wp.position.x()) << ',' << fmt(wp.position.y()) << ','
            << fmt(wp.position.z()) << ',' << fmt(wp.orientation.w) << ','
            << fmt(wp.orientation.x) << ',' << fmt(wp.orientation.y) << ','
            << fmt(wp.orientation.z) << ',' << fmt(plan.cum_length[i]) << '\n';
    }
}

/// Force trace: time,Fx,Fy,Fz,magnitude,segment_idx
/// Threshold violations are motion steps and stay in the trace; the
/// synthetic replan/goal markers live in the events CSV.
inline void write_force_trace(const std::string& path, const ExecutionLog& log) {
    auto out = open_out(path);
    out << "time,Fx,Fy,Fz,magnitude,segment_idx\n";
    for (const auto& s : log.steps) {
        if (s.event == StepEvent::ReplanStarted || s.event == StepEvent::GoalReached)
            continue;
        out << fmt(s.time) << ',' << fmt(s.force.x()) << ',' << fmt(s.force.y()) << ','
            << fmt(s.force.z()) << ',' << fmt(s.force.norm()) << ','
            << s.active_segment << '\n';
    }
}

/// Events: time,event,plan_index,x,y,z
inline void write_events(const std::string& path, const ExecutionLog& log) {
    auto out = open_out(path);
    out << "time,event,plan_index,x,y,z\n";
    for (const auto& s : log.steps) {
        if (s.event == StepEvent::None) continue;
        out << fmt(s.time) << ',' << to_string(s.event) << ',' << s.plan_index << ','
            << fmt(s.pose.position.x()) << ',' << fmt(s.pose.position.y()) << ','
            << fmt(s.pose.position.z()) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Minimal reader (for report verification)
// ---------------------------------------------------------------------------

inline std::vector<std::vector<std::string>> read_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open for reading: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

}  // namespace bramble::csv

#pragma once

// Workspace directory: manifest, cells/, checkpoints/, reports/ and a marker
// file identifying the layout version.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "celldiv/errors.hpp"

namespace celldiv::pipeline {

inline constexpr const char* kWorkspaceMarker = ".celldiv-workspace";
inline constexpr int kWorkspaceVersion = 1;
inline constexpr const char* kWorkspaceEnv = "CELLDIV_WORKSPACE";

struct Workspace {
    std::filesystem::path root;

    std::filesystem::path manifest() const { return root / "manifest.json"; }
    std::filesystem::path cells() const { return root / "cells"; }
    std::filesystem::path checkpoints() const { return root / "checkpoints"; }
    std::filesystem::path reports() const { return root / "reports"; }
    /// Relative paths resolve against the root.
    std::filesystem::path resolve(const std::filesystem::path& p) const { return p.is_absolute() ? p : root / p; }
};

inline bool is_workspace(const std::filesystem::path& root) { return std::filesystem::exists(root / kWorkspaceMarker); }

/// Explicit flag, else the environment override, else the current directory.
inline std::filesystem::path workspace_root(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv(kWorkspaceEnv); env && *env) return env;
    return std::filesystem::current_path();
}

/// Opens an existing workspace or creates it: the layout is built in a
/// temporary sibling directory and renamed into place.
inline Workspace open_workspace(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    Workspace ws{fs::absolute(root).lexically_normal()};
    if (is_workspace(ws.root)) {
        std::ifstream is(ws.root / kWorkspaceMarker);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(is);
        } catch (const nlohmann::json::exception&) {
            fail(ErrorKind::corrupt_file, "unreadable workspace marker in " + ws.root.string());
        }
        if (j.value("version", 0) != kWorkspaceVersion) fail(ErrorKind::version_mismatch, "unsupported workspace version");
        return ws;
    }
    std::error_code ec;
    if (fs::exists(ws.root) && !fs::is_empty(ws.root)) {
        // populated directory without a marker: adopt it in place
        fs::create_directories(ws.cells());
        fs::create_directories(ws.checkpoints());
        fs::create_directories(ws.reports());
        std::ofstream os(ws.root / kWorkspaceMarker);
        os << nlohmann::json{{"format", "celldiv-workspace"}, {"version", kWorkspaceVersion}}.dump() << '\n';
        if (!os) fail(ErrorKind::io, "cannot write workspace marker in " + ws.root.string());
        return ws;
    }
    if (ws.root.has_parent_path()) fs::create_directories(ws.root.parent_path());
    std::random_device rd;
    const fs::path tmp = ws.root.parent_path() / (ws.root.filename().string() + ".tmp" + std::to_string(rd()));
    fs::create_directories(tmp / "cells");
    fs::create_directories(tmp / "checkpoints");
    fs::create_directories(tmp / "reports");
    {
        std::ofstream os(tmp / kWorkspaceMarker);
        os << nlohmann::json{{"format", "celldiv-workspace"}, {"version", kWorkspaceVersion}}.dump() << '\n';
        if (!os) fail(ErrorKind::io, "cannot write workspace marker");
    }
    if (fs::exists(ws.root)) fs::remove(ws.root, ec); // empty directory
    fs::rename(tmp, ws.root, ec);
    if (ec) {
        fs::remove_all(tmp);
        if (!is_workspace(ws.root)) fail(ErrorKind::io, "cannot create workspace " + ws.root.string() + ": " + ec.message());
    }
    return ws;
}

} // namespace celldiv::pipeline

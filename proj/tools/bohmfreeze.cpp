#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bohmfreeze/cli.hpp"

namespace cli = bohmfreeze::cli;

int main(int argc, char** argv) {
    CLI::App app{"Bohmian mode freezing in de Sitter space"};
    app.require_subcommand(1);
    app.allow_extras();
    app.set_version_flag("--version", cli::program_version);

    std::string config_path;
    int workers = 0;
    bool deterministic = false;
    bool check_only = false;
    // Shared options are accepted before or after the subcommand name.
    auto add_shared = [&](CLI::App* a) {
        a->add_option("-c,--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
        a->add_option("--workers", workers, "worker threads (default: BOHMFREEZE_WORKERS or hardware)")
            ->check(CLI::PositiveNumber);
        a->add_flag("--deterministic", deterministic, "run with a single worker");
        a->add_flag("--check", check_only, "validate the configuration and exit");
    };
    add_shared(&app);
    for (const auto& name : cli::subcommands()) {
        auto* sub = app.add_subcommand(name);
        sub->allow_extras();
        add_shared(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? cli::exit_ok : cli::exit_invalid;
    }

    if (deterministic) bohmfreeze::set_worker_count(1);
    else if (workers > 0) bohmfreeze::set_worker_count(static_cast<std::size_t>(workers));

    const auto* sub = app.get_subcommands().front();
    std::vector<cli::Diagnostic> diags;
    auto extras = app.remaining();
    for (const auto& a : sub->remaining()) extras.push_back(a);
    const auto merged = cli::resolve_config(config_path, extras, diags);
    if (!diags.empty()) {
        for (const auto& d : diags) std::cerr << "bohmfreeze: " << d.field << ": " << d.message << '\n';
        return cli::exit_invalid;
    }
    if (check_only) {
        std::vector<cli::Diagnostic> parse_diags;
        const auto rc = cli::parse_config(merged, parse_diags);
        if (parse_diags.empty()) parse_diags = cli::validate(rc, sub->get_name());
        for (const auto& d : parse_diags) std::cerr << "bohmfreeze: " << d.field << ": " << d.message << '\n';
        if (parse_diags.empty()) std::cout << merged.dump(2) << '\n';
        return parse_diags.empty() ? cli::exit_ok : cli::exit_invalid;
    }
    const auto res = cli::run(sub->get_name(), merged, std::cerr);
    if (res.exit_code == cli::exit_ok) std::cout << res.summary.dump(2) << '\n';
    return res.exit_code;
}

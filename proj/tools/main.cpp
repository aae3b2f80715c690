#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

#include "hyperscat/partitions.hpp"
#include "hyperscat/version.hpp"

using nlohmann::json;

namespace {

int cmd_partitions(int n, bool chains) {
    using namespace hyperscat::partitions;
    json out;
    out["n"] = n;
    if (chains) {
        auto cs = enumerate_chains(n);
        json jchains = json::array();
        for (const auto& c : cs) jchains.push_back(c.str());
        out["chains"] = jchains;
        out["count"] = cs.size();
        out["formula"] = chain_count_formula(n);
        out["count_matches_formula"] = (static_cast<std::int64_t>(cs.size()) == chain_count_formula(n));
    } else {
        json jparts = json::array();
        std::size_t total = 0;
        for (int k = 1; k <= n; ++k) {
            for (const auto& p : enumerate_partitions(n, k)) jparts.push_back(p.str());
            total += enumerate_partitions(n, k).size();
        }
        out["partitions"] = jparts;
        out["count"] = total;
    }
    std::cout << out.dump(2) << "\n";
    if (chains && !out["count_matches_formula"].get<bool>()) return 1;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hyperscat: weak asymptotics of N-particle scattering"};
    app.set_version_flag("--version", hyperscat::version_string);
    app.require_subcommand(1);

    auto* part = app.add_subcommand("partitions", "Enumerate cluster partitions and partition chains");
    int part_n = 3;
    bool part_chains = false;
    part->add_option("--n", part_n, "Particle count")->required();
    part->add_flag("--chains", part_chains, "Enumerate maximal partition chains instead of partitions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);  // prints help/error text
        return rc == 0 ? 0 : 2;
    }

    try {
        if (part->parsed()) return cmd_partitions(part_n, part_chains);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

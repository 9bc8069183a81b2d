#include "navlab/metrics.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "navlab/errors.hpp"

namespace navlab::metrics {

const char* bucket_name(Bucket b) {
    switch (b) {
        case Bucket::Short: return "Short";
        case Bucket::Medium: return "Medium";
        case Bucket::Long: return "Long";
        case Bucket::Unbucketed: return "Unbucketed";
    }
    return "?";
}

Bucket bucketize_length(double l, const BucketBounds& bounds) {
    if (l >= bounds.short_min && l < bounds.short_max) return Bucket::Short;
    if (l >= bounds.short_max && l < bounds.medium_max) return Bucket::Medium;
    if (l >= bounds.medium_max && l <= bounds.long_max) return Bucket::Long;
    return Bucket::Unbucketed;
}

EpisodeResult evaluate_episode(const dataset::Trajectory& traj,
                               const dataset::EpisodeSpec& episode,
                               const worldsim::FloorPlan& plan, double success_radius,
                               const BucketBounds& bounds) {
    if (traj.steps.empty()) throw InputError("cannot evaluate an empty trajectory");
    const worldsim::GeodesicSolver solver(plan);

    EpisodeResult r;
    r.episode_id = episode.episode_id;
    r.geodesic_length = episode.geodesic_length;
    r.bucket = bucketize_length(r.geodesic_length, bounds);

    const auto& final_pose = traj.steps.back().pose;
    r.ne = solver.geodesic(final_pose.position(), episode.goal);
    const bool stopped = traj.terminal && traj.steps.back().action == worldsim::NavAction::Stop;
    r.success = stopped && r.ne <= success_radius;

    // Geodesic >= Euclidean, so only Euclidean-close poses need the solver.
    r.oracle_success = false;
    for (const auto& st : traj.steps) {
        if (distance(st.pose.position(), episode.goal) > success_radius) continue;
        if (solver.geodesic(st.pose.position(), episode.goal) <= success_radius) {
            r.oracle_success = true;
            break;
        }
    }

    double p = 0.0;
    for (std::size_t i = 1; i < traj.steps.size(); ++i)
        p += distance(traj.steps[i - 1].pose.position(), traj.steps[i].pose.position());
    r.path_length = p;
    const double l = r.geodesic_length;
    r.spl_term = r.success ? l / std::max(p, l) : 0.0;
    return r;
}

Report aggregate(const std::vector<EpisodeResult>& results) {
    Report rep;
    auto fold = [](Aggregate& agg, const std::vector<const EpisodeResult*>& rs) {
        agg.count = static_cast<int>(rs.size());
        if (rs.empty()) return;
        double sr = 0, spl = 0, osr = 0, ne = 0;
        for (const auto* r : rs) {
            sr += r->success ? 1.0 : 0.0;
            spl += r->spl_term;
            osr += r->oracle_success ? 1.0 : 0.0;
            ne += r->ne;
        }
        const double n = static_cast<double>(rs.size());
        agg.sr = 100.0 * sr / n;
        agg.spl = 100.0 * spl / n;
        agg.osr = 100.0 * osr / n;
        agg.ne = ne / n;
    };

    std::vector<const EpisodeResult*> all;
    std::map<Bucket, std::vector<const EpisodeResult*>> buckets;
    for (const auto& r : results) {
        all.push_back(&r);
        buckets[r.bucket].push_back(&r);
    }
    fold(rep.overall, all);
    for (const Bucket b : {Bucket::Short, Bucket::Medium, Bucket::Long, Bucket::Unbucketed}) {
        Aggregate agg;
        fold(agg, buckets[b]);
        rep.per_bucket[b] = agg;
    }
    return rep;
}

void write_report(const Report& report, const std::vector<EpisodeResult>& results,
                  const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream csv(out_dir + "/results.csv");
        if (!csv) throw NavError("cannot write results.csv in " + out_dir);
        csv << "episode_id,bucket,success,oracle_success,ne,spl_term,l,p\n";
        char line[256];
        for (const auto& r : results) {
            std::snprintf(line, sizeof(line), "%s,%s,%d,%d,%.6f,%.6f,%.6f,%.6f\n",
                          r.episode_id.c_str(), bucket_name(r.bucket), r.success ? 1 : 0,
                          r.oracle_success ? 1 : 0, r.ne, r.spl_term, r.geodesic_length,
                          r.path_length);
            csv << line;
        }
    }
    {
        nlohmann::json j;
        auto agg_json = [](const Aggregate& a) {
            return nlohmann::json{
                {"count", a.count}, {"SR", a.sr}, {"SPL", a.spl}, {"OSR", a.osr}, {"NE", a.ne}};
        };
        j["overall"] = agg_json(report.overall);
        for (const auto& [bucket, agg] : report.per_bucket)
            j["buckets"][bucket_name(bucket)] = agg_json(agg);
        std::ofstream f(out_dir + "/summary.json");
        if (!f) throw NavError("cannot write summary.json in " + out_dir);
        f << j.dump(2) << "\n";
    }
}

}  // namespace navlab::metrics

// Builds both noise schedules, prints a few rows of each, and writes the full
// tables plus SNR-based cluster boundaries as CSV for plotting.
#include <cstdio>

#include "pacediff/pacediff.hpp"

int main() {
    using namespace pacediff;

    for (const auto kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
        const NoiseSchedule s = build_schedule(kind, 1000);
        std::printf("%s schedule (T=%d)\n", std::string(to_string(kind)).c_str(), s.T);
        for (int t : {0, 250, 500, 750, 999})
            std::printf("  t=%3d  beta=%-12.6g alpha_bar=%-12.6g snr=%-12.6g\n", t, s.beta[t],
                        s.alpha_bar[t], s.snr[t]);
        write_schedule_csv(s, "runs/tables/" + std::string(to_string(kind)) + ".csv");

        const ClusterSet clusters = snr_clusters(s, 20);
        write_clusters_csv(clusters, "runs/tables/" + std::string(to_string(kind)) +
                                          "_clusters.csv",
                           &s);
        std::printf("  snr clusters: first=[%d,%d) last=[%d,%d)\n", clusters.lo(1),
                    clusters.hi(1), clusters.lo(20), clusters.hi(20));
    }
    std::puts("tables written to runs/tables/");
    return 0;
}

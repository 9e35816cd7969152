#include "arflow/report.hpp"

#include <cstdio>
#include <fstream>

namespace arflow {

namespace {

std::ofstream open_out(const std::filesystem::path& path, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trace_csv(const std::filesystem::path& path,
                     const RunTrace& trace) {
  std::ofstream out = open_out(path, false);
  out << "event,chunk,step,enc_prerestore,enc_guidance,enc_display,enc_other,"
         "dec_prerestore,dec_guidance,dec_display,dec_other,wall_ns\n";
  for (const TraceEvent& e : trace.events) {
    out << trace_kind_name(e.kind) << ',' << e.chunk << ',' << e.step;
    for (int i = 0; i < 4; ++i) out << ',' << e.enc_delta[i];
    for (int i = 0; i < 4; ++i) out << ',' << e.dec_delta[i];
    out << ',' << e.wall_ns << '\n';
  }
  finish(out, path);
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRow>& rows) {
  std::ofstream out = open_out(path, false);
  out << "id,task,mode,psnr_db,ssim,latency_steps,guidance_calls,"
         "enc_prerestore,enc_guidance,enc_display,enc_other,"
         "dec_prerestore,dec_guidance,dec_display,dec_other,"
         "total_reverse_steps,wall_ns,frames_per_step\n";
  for (const MetricsRow& r : rows) {
    out << r.id << ',' << r.task << ',' << r.mode << ','
        << format_double(r.psnr_db) << ',' << format_double(r.ssim_val) << ','
        << r.latency_steps << ',' << r.guidance_calls;
    for (int i = 0; i < 4; ++i) out << ',' << r.enc_passes[i];
    for (int i = 0; i < 4; ++i) out << ',' << r.dec_passes[i];
    out << ',' << r.total_reverse_steps << ',' << r.wall_ns << ','
        << format_double(r.frames_per_step) << '\n';
  }
  finish(out, path);
}

void write_bound_csv(const std::filesystem::path& path,
                     const std::vector<BoundReport>& reports) {
  std::ofstream out = open_out(path, false);
  out << "seed,row,step,t,eps,lip_state,lip_context,lambda,beta,"
         "eps0,eps_t0,delta,lambda_total,beta_total,rhs,eps_final,"
         "satisfied\n";
  for (const BoundReport& r : reports) {
    for (std::size_t k = 0; k < r.eps.size(); ++k) {
      out << r.seed << ",step," << k << ',' << format_double(r.grid[k]) << ','
          << format_double(r.eps[k]) << ',';
      if (k < r.lambda.size()) {
        out << format_double(r.lip_state[k]) << ','
            << format_double(r.lip_context[k]) << ','
            << format_double(r.lambda[k]) << ',' << format_double(r.beta[k]);
      } else {
        out << ",,,";
      }
      out << ",,,,,,,,\n";
    }
    out << r.seed << ",summary,,,,,,,," << format_double(r.eps0) << ','
        << format_double(r.eps_t0) << ',' << format_double(r.delta) << ','
        << format_double(r.lambda_total) << ',' << format_double(r.beta_total)
        << ',' << format_double(r.rhs) << ',' << format_double(r.eps_final)
        << ',' << (r.satisfied ? 1 : 0) << '\n';
  }
  finish(out, path);
}

void write_manifest(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream out = open_out(path, false);
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  finish(out, path);
}

void append_manifest_status(const std::filesystem::path& path,
                            const std::string& status) {
  std::ofstream out = open_out(path, true);
  out << "status=" << status << '\n';
  finish(out, path);
}

}  // namespace arflow

#pragma once

#include "rffi/harness.hpp"
#include "rffi/workspace.hpp"

namespace rffi::exp {

using harness::EvalReport;
using workspace::Workspace;

// White-box FGSM/PGD sweep against one victim (same model and data).
EvalReport psr_sweep(Workspace& ws, const std::string& victim_arch,
                     const std::string& method);

// Targeted PGD source x target matrix on one victim at a fixed PSR.
std::vector<std::vector<double>> targeted_matrix_run(Workspace& ws,
                                                     const std::string& victim_arch,
                                                     double psr_db);

// UAP scenario for one victim under a threat kind (WB / GB1 / GB2 / BB).
EvalReport uap_scenario(Workspace& ws, const std::string& victim_arch,
                        harness::ThreatKind kind, std::uint64_t seed);

// 6 surrogate archs x 6 victim archs, one UAP per surrogate.
std::vector<harness::CrossModelEntry> crossmodel_table(Workspace& ws,
                                                       double psr_db);

// UAP from day-1 data applied to each synthetic day of the victim.
harness::CrossDayReport crossday_run(Workspace& ws,
                                     const std::string& victim_arch);

enum class CrossDeviceMode { SameDevice, DiffDevice, DiffDeviceAndNet };
std::string crossdevice_mode_name(CrossDeviceMode m);

// Group-1 surrogates against Group-1 (same) or Group-2 (diff) victims.
EvalReport crossdevice_run(Workspace& ws, const std::string& family,
                           CrossDeviceMode mode, std::uint64_t seed);

// Real-time masked UAP against a cross-day victim set.
EvalReport realtime_run(Workspace& ws, const std::string& victim_arch,
                        harness::RealtimeMode mode, std::uint64_t seed);

// Combined practical setting: Group-1 surrogates (CNN2, LSTM2, GRU1),
// Group-2 victims (CNN1*, LSTM1*, GRU1*), three days, Sync-UAP.
nlohmann::json practical_run(Workspace& ws);

std::vector<double> fgsm_pgd_sweep(const Workspace& ws);
std::vector<double> uap_sweep(const Workspace& ws);

}  // namespace rffi::exp

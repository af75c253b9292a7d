#pragma once

#include "amgan/signal.hpp"

#include <filesystem>
#include <iosfwd>

namespace amgan {

// Record CSV layout: header `t,ppg_green[,ppg_red,ppg_ir],ax,ay,az`, time in
// seconds, strictly increasing and uniform to 1e-6 relative. The sample rate is
// inferred from the time column.
MultiChannelRecord read_record_csv(std::istream& in);
MultiChannelRecord read_record_csv(const std::filesystem::path& path);

void write_record_csv(std::ostream& out, const MultiChannelRecord& rec);
void write_record_csv(const std::filesystem::path& path, const MultiChannelRecord& rec);

}  // namespace amgan

#pragma once

#include <string_view>

namespace bucketline {

enum class EventKind { TxStart, TxEnd, RxDetect, RxDecoded, StateChange, Warning, CycleStart, CycleEnd, Fault };

std::string_view to_string(EventKind kind);

}  // namespace bucketline

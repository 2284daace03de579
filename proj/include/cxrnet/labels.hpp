#pragma once

namespace cxrnet {

/// Binary class label. covid is the positive class everywhere.
enum class Label { normal, covid };

inline const char* label_name(Label l) { return l == Label::covid ? "covid" : "normal"; }

}  // namespace cxrnet

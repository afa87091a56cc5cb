#include "chainmem/errors.hpp"

namespace chainmem {

const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Config: return "Config";
    case ErrorKind::EmptyDocument: return "EmptyDocument";
    case ErrorKind::TemplateMismatch: return "TemplateMismatch";
    case ErrorKind::IndexOrder: return "IndexOrder";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::UnparseableVerdict: return "UnparseableVerdict";
    case ErrorKind::OutOfOrderAppend: return "OutOfOrderAppend";
    case ErrorKind::UnrelatedAppend: return "UnrelatedAppend";
    case ErrorKind::StaleConflict: return "StaleConflict";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::Transport: return "Transport";
    case ErrorKind::RemoteStatus: return "RemoteStatus";
    case ErrorKind::ScriptExhausted: return "ScriptExhausted";
    case ErrorKind::Malformed: return "Malformed";
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::NeedleTooLong: return "NeedleTooLong";
    }
    return "Unknown";
}

} // namespace chainmem

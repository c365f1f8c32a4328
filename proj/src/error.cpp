#include "sct/error.hpp"

namespace sct {

void throw_data(const std::string& what) { throw DataError(what); }
void throw_numeric(const std::string& what) { throw NumericError(what); }

}  // namespace sct

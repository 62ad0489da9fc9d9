#pragma once

#include <cstddef>
#include <cstdint>

namespace canids {

// CRC-32 (IEEE 802.3, reflected, init/xorout 0xffffffff). Used for blob
// integrity in model bundles and as the parameter-hash primitive.
uint32_t crc32(const void* data, size_t len, uint32_t seed = 0);

} // namespace canids

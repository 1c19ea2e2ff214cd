#pragma once

#include <vector>

#include <Eigen/Core>

namespace sar2sar {

/// Contiguous storage aligned for Eigen's widest packets. Eigen picks
/// vectorised code paths from the runtime alignment of the data it is
/// given, so every buffer it reads or writes is allocated this way: results
/// then depend only on shapes, never on where the heap placed a block.
template <class T> using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

} // namespace sar2sar

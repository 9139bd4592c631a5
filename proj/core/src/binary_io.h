/*
 * Copyright 2026 The xmodal Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Little-endian primitives shared by the checkpoint writers.
#ifndef XMODAL_SRC_BINARY_IO_H_
#define XMODAL_SRC_BINARY_IO_H_

#include <cstdint>
#include <istream>
#include <ostream>

#include "xmodal/numeric.h"

namespace xmodal::binary_io {

inline void WriteU32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void WriteF64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void WriteMatrix(std::ostream& out, const Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

inline uint32_t ReadU32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw Error("truncated checkpoint");
  return v;
}

inline double ReadF64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw Error("truncated checkpoint");
  return v;
}

inline Matrix ReadMatrix(std::istream& in, uint32_t rows, uint32_t cols) {
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw Error("truncated checkpoint");
  if (!m.allFinite()) throw Error("non-finite parameter in checkpoint");
  return m;
}

}  // namespace xmodal::binary_io

#endif  // XMODAL_SRC_BINARY_IO_H_

// Copyright (c) the cvpp authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CVPP_GEMM_H_
#define CVPP_GEMM_H_

namespace cvpp {

// C(m x n) = op(A) * op(B), or += when accumulate.
// Row-major with tight leading dimensions: A is (m x k) or, when ta, stored
// as (k x m); likewise B. Single-threaded and deterministic.
void gemm(bool ta, bool tb, int m, int n, int k, const float* a, const float* b, float* c,
          bool accumulate);

}  // namespace cvpp

#endif  // CVPP_GEMM_H_

// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace ergo {

/**
 * Error raised when a computation produces a non-finite value or
 * adjoint.  The index identifies where the failure happened; its
 * meaning depends on the throw site (tape operation index, leapfrog
 * iteration, chain index, training iteration) and is spelled out in
 * the message.
 */
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, long index)
      : std::runtime_error(what), index_(index) {}

  long index() const noexcept { return index_; }

 private:
  long index_;
};

/// Requested analytic entropy for a target that does not have one.
class EntropyUnavailable : public std::runtime_error {
 public:
  explicit EntropyUnavailable(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace ergo

// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace htmoe {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace htmoe

#pragma once

#include <functional>
#include <string>

#include <gtest/gtest.h>

#include "xdistill/error.hpp"

// Runs `fn` and checks that it raises xdistill::Error with `code`.
inline ::testing::AssertionResult raises(xdistill::ErrorCode code, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const xdistill::Error& e) {
    if (e.code() == code) return ::testing::AssertionSuccess();
    return ::testing::AssertionFailure() << "raised " << xdistill::to_string(e.code()) << " (" << e.what()
                                         << "), expected " << xdistill::to_string(code);
  } catch (const std::exception& e) {
    return ::testing::AssertionFailure() << "raised a foreign exception: " << e.what();
  }
  return ::testing::AssertionFailure() << "nothing raised, expected " << xdistill::to_string(code);
}

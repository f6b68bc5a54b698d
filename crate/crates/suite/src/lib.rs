//! Holds the `acceptance` test target, which runs each acceptance criterion
//! and prints one PASS/FAIL line per criterion. The package sorts after the
//! others so a failing criterion does not stop their tests from running.

//! Holds the `acceptance` test target of the workspace. The crate sorts after
//! the others so a failing criterion does not stop their tests from running.

//! Home of the `acceptance` test target, which checks the workspace against
//! its numeric acceptance criteria and prints one line per criterion.

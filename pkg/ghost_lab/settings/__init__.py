# Settings package

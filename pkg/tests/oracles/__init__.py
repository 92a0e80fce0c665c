# Independent reference implementations used to check the package.
# Nothing here imports from locbench; that is the point.

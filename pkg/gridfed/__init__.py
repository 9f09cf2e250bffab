# gridfed package

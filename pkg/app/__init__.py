# Appell attractor package

# Reference-solution cache

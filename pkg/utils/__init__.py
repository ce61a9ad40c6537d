"""
Utils package
Errors, random streams, file I/O, progress logging, worker pool and report storage
"""

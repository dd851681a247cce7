# Tests package initializer to enable unittest discovery.

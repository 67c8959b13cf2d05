EC_OK = 0
EC_ERR_GENERAL = 1
EC_ERR_USAGE = 2

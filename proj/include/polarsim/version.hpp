#pragma once

#define POLARSIM_VERSION_MAJOR 0
#define POLARSIM_VERSION_MINOR 1
#define POLARSIM_VERSION_PATCH 0
#define POLARSIM_VERSION_STRING "0.1.0"

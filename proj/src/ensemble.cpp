#include "tem/ensemble.hpp"

namespace tem {

unsigned resolve_workers(unsigned requested) {
    if (requested != 0) {
        return requested;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

}  // namespace tem
